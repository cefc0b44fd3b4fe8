//! Flat `key = value` description of a classifier, enough to rebuild it
//! exactly (together with a checkpoint).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::ops::Activation;
use crate::Scalar;

use super::multistream::{Classifier, MotionPairing, MultiStreamNet, StreamConfig, StreamKind};
use super::network::{build_network, ModelKind, ModelOptions};
use super::profile::ScaleProfile;

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", i + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {k:?}", i + 1)));
        }
    }
    Ok(out)
}

pub(crate) fn parse_value<V: FromStr>(key: &str, v: &str) -> Result<V> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub profile: ScaleProfile,
    pub streams: StreamConfig,
    pub options: ModelOptions,
}

impl ModelConfig {
    pub const KEYS: [&'static str; 9] = ["kind", "profile", "input_extent", "streams", "motion_pairs", "seed", "slope", "shift", "classes"];

    pub fn new(kind: ModelKind, profile: ScaleProfile, streams: StreamConfig, seed: u64) -> Self {
        Self {
            kind,
            profile,
            streams,
            options: ModelOptions::with_seed(seed),
        }
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = map.keys().find(|k| !Self::KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown model key {k:?}")));
        }
        let get = |k: &str| map.get(k).ok_or_else(|| Error::Config(format!("model config lacks {k:?}")));
        let kind = ModelKind::parse(get("kind")?).map_err(|e| Error::Config(e.to_string()))?;
        let mut profile = ScaleProfile::named(get("profile")?).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(v) = map.get("input_extent") {
            profile.input_extent = parse_value("input_extent", v)?;
        }
        let mut streams = StreamConfig::parse(map.get("streams").map_or("rgb", String::as_str))?;
        if let Some(v) = map.get("motion_pairs") {
            streams = streams.with_motion(MotionPairing::parse(v).map_err(|e| Error::Config(e.to_string()))?);
        }
        let seed = parse_value("seed", get("seed")?)?;
        let d = Activation::default();
        let slope = map.get("slope").map_or(Ok(d.slope), |v| parse_value("slope", v))?;
        let shift = map.get("shift").map_or(Ok(d.shift), |v| parse_value("shift", v))?;
        let act = Activation::new(slope, shift).map_err(|e| Error::Config(e.to_string()))?;
        let class_count = map.get("classes").map_or(Ok(16), |v| parse_value("classes", v))?;
        Ok(Self {
            kind,
            profile,
            streams,
            options: ModelOptions { seed, act, class_count },
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(&parse_key_values(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let o = &self.options;
        let _ = writeln!(s, "kind = {}", self.kind);
        let _ = writeln!(s, "profile = {}", self.profile.name);
        let _ = writeln!(s, "input_extent = {}", self.profile.input_extent);
        let _ = writeln!(s, "streams = {}", self.streams.list());
        let _ = writeln!(s, "motion_pairs = {}", self.streams.motion.as_str());
        let _ = writeln!(s, "seed = {}", o.seed);
        let _ = writeln!(s, "slope = {}", o.act.slope);
        let _ = writeln!(s, "shift = {}", o.act.shift);
        let _ = writeln!(s, "classes = {}", o.class_count);
        s
    }

    /// rC3D always goes through the multi-stream builder; with only the rgb
    /// stream it is the plain network. C3D and P3D-A are rgb-only.
    pub fn build_classifier<T: Scalar>(&self) -> Result<Box<dyn Classifier<T>>> {
        match self.kind {
            ModelKind::Rc3d => Ok(Box::new(MultiStreamNet::build(&self.profile, &self.streams, &self.options)?)),
            kind => {
                if self.streams.streams() != [StreamKind::Rgb] {
                    return Err(Error::Config(format!("{kind} supports only the rgb stream, got {}", self.streams.list())));
                }
                Ok(Box::new(build_network(kind, &self.profile, &self.options)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip() {
        let cfg = ModelConfig::new(
            ModelKind::Rc3d,
            ScaleProfile::toy(),
            StreamConfig::new(&[StreamKind::Rgb, StreamKind::Motion]).unwrap().with_motion(MotionPairing::Adjacent),
            99,
        );
        let back = ModelConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_key_values("novalue").is_err());
        assert!(parse_key_values("a = 1\na = 2").is_err());
        assert!(ModelConfig::parse("kind = rc3d\nprofile = toy").is_err(), "seed is mandatory");
        assert!(ModelConfig::parse("kind = rc3d\nprofile = toy\nseed = 1\ncolour = red").is_err());
        let c3d = ModelConfig::parse("kind = c3d\nprofile = toy\nseed = 1\nstreams = rgb,motion").unwrap();
        assert!(matches!(c3d.build_classifier::<f32>(), Err(Error::Config(_))));
    }
}
