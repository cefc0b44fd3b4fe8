use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rc3d_core::Optimizer;
use rc3d_data::Augment;

use crate::error::{config, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Self::Adam),
            "sgd" => Ok(Self::Sgd),
            other => Err(config(format!("unknown optimizer {other:?} (expected adam or sgd)"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Adam => "adam",
            Self::Sgd => "sgd",
        }
    }
}

/// Hyperparameters shared by every model variant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    /// SGD only.
    pub momentum: f64,
    pub augment: Augment,
    pub seed: u64,
}

impl Hyper {
    pub fn new(seed: u64) -> Self {
        Self {
            epochs: 20,
            batch_size: 8,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            momentum: 0.9,
            augment: Augment::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(config("batch_size must be at least 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(config(format!("lr must be finite and non-negative, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.augment.noise_sigma >= 0.0 && self.augment.noise_sigma.is_finite()) {
            return Err(config(format!("noise sigma must be non-negative, got {}", self.augment.noise_sigma)));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> Optimizer {
        match self.optimizer {
            OptimizerKind::Adam => Optimizer::adam(self.lr),
            OptimizerKind::Sgd => Optimizer::sgd(self.lr, self.momentum),
        }
    }
}

/// Folds `parts` into one seed with the splitmix64 finaliser, so nearby
/// tuples give unrelated streams.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        let mut z = h ^ p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}

pub(crate) const TAG_SHUFFLE: u64 = 1;
pub(crate) const TAG_AUGMENT: u64 = 2;
pub(crate) const TAG_DROPOUT: u64 = 3;

/// `0..n` in the order of one epoch.
pub(crate) fn epoch_order(n: usize, seed: u64, phase: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[seed, phase, TAG_SHUFFLE, epoch as u64])));
    idx
}
