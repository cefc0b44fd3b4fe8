//! Run configuration: a flat `key = value` file plus `--set key=value`
//! overrides. Every key is listed in [`KEYS`]; unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rc3d_core::models::{parse_key_values, ModelConfig};

use crate::error::{CliError, Result};

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "the single source of randomness; required by every command"),
    ("data", "dataset directory (read by train, train-gan, eval, flow-viz)"),
    ("out", "output directory"),
    ("per_class", "gen-data: videos per class"),
    ("extent", "gen-data: rendered frame size in pixels"),
    ("noise", "gen-data: sensor noise standard deviation"),
    ("valid_fraction", "gen-data: validation share of each class"),
    ("kind", "model: c3d, p3da or rc3d"),
    ("profile", "model: toy or full"),
    ("input_extent", "model: network input size (clips are resized to it)"),
    ("streams", "model: comma list of rgb, gdepth, motion"),
    ("motion_pairs", "model: span or adjacent"),
    ("slope", "model: negative slope of the shifted leaky ReLU"),
    ("shift", "model: shift of the shifted leaky ReLU"),
    ("classes", "model: number of classes"),
    ("epochs", "classifier training epochs"),
    ("batch_size", "minibatch size"),
    ("lr", "learning rate"),
    ("optimizer", "adam or sgd"),
    ("momentum", "sgd momentum"),
    ("rotate", "augmentation: random rotation on or off (true/false)"),
    ("noise_sigma", "augmentation: Gaussian noise standard deviation"),
    ("generator", "generator checkpoint manifest (.json) for the gdepth stream"),
    ("depth_source", "gdepth frames from the generator (generated) or the rendered depth (sensor)"),
    ("generator_epochs", "train-gan: generator pretraining epochs"),
    ("critic_epochs", "train-gan: critic pretraining epochs"),
    ("adversarial_epochs", "train-gan: alternating epochs"),
    ("switch_ratio", "train-gan: critic steps per generator step"),
    ("switch_threshold", "train-gan: switch on critic loss instead of a fixed ratio"),
    ("lambda", "train-gan: MSE weight in the adversarial generator loss"),
    ("attention", "train-gan: self-attention in the critic (true/false)"),
    ("checkpoint", "eval: classifier checkpoint manifest (.json)"),
    ("label", "model name in the summary table"),
    ("sample", "flow-viz: index of the sample in the dataset manifest"),
    ("flow_levels", "flow: pyramid levels"),
    ("flow_window", "flow: aggregation window size"),
    ("flow_iterations", "flow: iterations per level"),
    ("fault", "gradcheck: op whose backward rule gets a sign error"),
    ("tolerance", "gradcheck: relative error bound"),
    ("eps", "gradcheck: finite-difference step"),
    ("max_coords", "gradcheck: coordinates probed per tensor"),
];

/// Merged configuration of one command.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn parse_set(s: &str) -> Result<(String, String)> {
    let (k, v) = s.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects key=value, got {s:?}")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

impl RunConfig {
    /// File values first, then overrides in order.
    pub fn load(file: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut values = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                parse_key_values(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => BTreeMap::new(),
        };
        for s in sets {
            let (k, v) = parse_set(s)?;
            values.insert(k, v);
        }
        let cfg = Self { values };
        cfg.check_keys()?;
        cfg.require::<u64>("seed")?;
        Ok(cfg)
    }

    pub fn from_pairs(pairs: &[(&str, &str)]) -> Result<Self> {
        let cfg = Self {
            values: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        };
        cfg.check_keys()?;
        cfg.require::<u64>("seed")?;
        Ok(cfg)
    }

    fn check_keys(&self) -> Result<()> {
        match self.values.keys().find(|k| !KEYS.iter().any(|(name, _)| name == k)) {
            Some(k) => Err(CliError::Config(format!("unknown key {k:?}"))),
            None => Ok(()),
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<V: FromStr>(&self, key: &str) -> Result<Option<V>> {
        self.raw(key)
            .map(|v| v.parse().map_err(|_| CliError::Config(format!("{key}: cannot parse {v:?}"))))
            .transpose()
    }

    pub fn get_or<V: FromStr>(&self, key: &str, default: V) -> Result<V> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<V: FromStr>(&self, key: &str) -> Result<V> {
        self.get(key)?.ok_or_else(|| CliError::Config(format!("missing required key {key:?}")))
    }

    pub fn seed(&self) -> Result<u64> {
        self.require("seed")
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        Ok(PathBuf::from(self.require::<String>(key)?))
    }

    /// An existing directory named by `key`.
    pub fn existing_dir(&self, key: &str) -> Result<PathBuf> {
        let p = self.path(key)?;
        if !p.is_dir() {
            return Err(CliError::Config(format!("{key}: {} is not a directory", p.display())));
        }
        Ok(p)
    }

    pub fn existing_file(&self, key: &str) -> Result<PathBuf> {
        let p = self.path(key)?;
        if !p.is_file() {
            return Err(CliError::Config(format!("{key}: {} does not exist", p.display())));
        }
        Ok(p)
    }

    /// Model description; the run seed doubles as the initialisation seed.
    pub fn model(&self) -> Result<ModelConfig> {
        let mut map: BTreeMap<String, String> = ModelConfig::KEYS
            .iter()
            .filter_map(|&k| self.values.get(k).map(|v| (k.to_string(), v.clone())))
            .collect();
        map.entry("kind".into()).or_insert_with(|| "rc3d".into());
        map.entry("profile".into()).or_insert_with(|| "toy".into());
        Ok(ModelConfig::from_map(&map)?)
    }

    /// `key = value` lines in key order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Writes the configuration to `<dir>/config.txt`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.txt"), self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_and_echo_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.txt");
        std::fs::write(&file, "seed = 3\nepochs = 5\n# comment\n").unwrap();
        let cfg = RunConfig::load(Some(&file), &["epochs=7".into(), "lr = 0.01".into()]).unwrap();
        assert_eq!(cfg.get_or("epochs", 0usize).unwrap(), 7);
        assert_eq!(cfg.get::<f64>("lr").unwrap(), Some(0.01));
        cfg.echo(dir.path()).unwrap();
        let back = RunConfig::load(Some(&dir.path().join("config.txt")), &[]).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn seed_is_mandatory_and_keys_are_checked() {
        assert!(matches!(RunConfig::load(None, &["epochs=1".into()]), Err(CliError::Config(_))));
        assert!(RunConfig::load(None, &["seed=1".into(), "colour=red".into()]).is_err());
        assert!(RunConfig::load(None, &["seed".into()]).is_err());
        assert!(RunConfig::load(None, &["seed=x".into()]).is_err());
    }

    #[test]
    fn model_defaults() {
        let cfg = RunConfig::from_pairs(&[("seed", "9"), ("streams", "rgb,motion")]).unwrap();
        let m = cfg.model().unwrap();
        assert_eq!(m.options.seed, 9);
        assert_eq!(m.streams.list(), "rgb,motion");
        assert_eq!(m.profile.name, "toy");
    }
}
