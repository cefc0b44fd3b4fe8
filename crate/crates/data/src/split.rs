use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::scene::CLASS_NAMES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
}

impl Split {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "valid" => Ok(Self::Valid),
            other => Err(DataError::Invalid(format!("unknown split {other:?} (expected train or valid)"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Valid => "valid",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    /// Directory relative to the dataset root.
    pub path: String,
    pub label: usize,
    pub split: Split,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub valid: usize,
}

/// Parameters the dataset was generated with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub per_class: usize,
    pub extent: usize,
    pub noise: f64,
    pub valid_fraction: f64,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(per_class: usize, seed: u64) -> Self {
        Self {
            per_class,
            extent: 64,
            noise: 0.02,
            valid_fraction: 0.41,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub class_names: Vec<String>,
    pub valid_fraction: f64,
    pub split_seed: u64,
    pub counts: SplitCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GenConfig>,
    pub samples: Vec<SampleEntry>,
}

impl DatasetManifest {
    pub const FORMAT: &'static str = "rc3d-dataset";

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleEntry> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.counts.train,
            Split::Valid => self.counts.valid,
        }
    }

    /// Per-class counts for one split.
    pub fn class_counts(&self, split: Split) -> Vec<usize> {
        let mut c = vec![0; self.class_names.len()];
        for s in self.split(split) {
            c[s.label] += 1;
        }
        c
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.format != Self::FORMAT {
            return Err(DataError::Format(format!("not a dataset manifest: format {:?}", m.format)));
        }
        if let Some(s) = m.samples.iter().find(|s| s.label >= m.class_names.len()) {
            return Err(DataError::Format(format!("{}: label {} out of range", s.path, s.label)));
        }
        Ok(m)
    }
}

/// Stratified split: within each class the samples are shuffled with a
/// class-specific stream of `seed` and the first `round(n * valid_fraction)`
/// go to validation. Incoming `split` fields are overwritten.
pub fn split_dataset(mut samples: Vec<SampleEntry>, valid_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if !(0.0..=1.0).contains(&valid_fraction) {
        return Err(DataError::Invalid(format!("valid_fraction must lie in [0, 1], got {valid_fraction}")));
    }
    let classes = CLASS_NAMES.len();
    if let Some(s) = samples.iter().find(|s| s.label >= classes) {
        return Err(DataError::Invalid(format!("{}: label {} out of range", s.path, s.label)));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_class.entry(s.label).or_default().push(i);
    }
    for s in &mut samples {
        s.split = Split::Train;
    }
    for (label, mut idx) in by_class {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(label as u64);
        idx.shuffle(&mut rng);
        let n_valid = (idx.len() as f64 * valid_fraction).round() as usize;
        for &i in &idx[..n_valid] {
            samples[i].split = Split::Valid;
        }
    }
    let valid = samples.iter().filter(|s| s.split == Split::Valid).count();
    Ok(DatasetManifest {
        format: DatasetManifest::FORMAT.into(),
        class_names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        valid_fraction,
        split_seed: seed,
        counts: SplitCounts {
            train: samples.len() - valid,
            valid,
        },
        generator: None,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(per_class: usize) -> Vec<SampleEntry> {
        (0..16 * per_class)
            .map(|i| SampleEntry {
                path: format!("s{i}"),
                label: i % 16,
                split: Split::Train,
                seed: i as u64,
            })
            .collect()
    }

    #[test]
    fn zero_fraction_is_all_train() {
        let m = split_dataset(entries(5), 0.0, 1).unwrap();
        assert_eq!(m.counts, SplitCounts { train: 80, valid: 0 });
    }

    #[test]
    fn stratified_counts() {
        let m = split_dataset(entries(100), 0.41, 7).unwrap();
        assert!(m.class_counts(Split::Valid).iter().all(|&c| c.abs_diff(41) <= 1));
        assert_eq!(m.counts.train + m.counts.valid, 1600);
        assert_eq!(split_dataset(entries(100), 0.41, 7).unwrap(), m);
        assert_ne!(split_dataset(entries(100), 0.41, 8).unwrap(), m);
    }

    #[test]
    fn json_roundtrip_and_checks() {
        let m = split_dataset(entries(2), 0.5, 3).unwrap();
        assert_eq!(DatasetManifest::from_json(&m.to_json().unwrap()).unwrap(), m);
        assert!(DatasetManifest::from_json(&m.to_json().unwrap().replace("rc3d-dataset", "other")).is_err());
        assert!(split_dataset(entries(1), 1.5, 0).is_err());
        assert_eq!(Split::parse("valid").unwrap(), Split::Valid);
    }
}
