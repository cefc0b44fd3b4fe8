//! Weight initialization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Result};
use crate::{Scalar, Tensor};

/// Standard deviation of the leaky-ReLU-aware Kaiming normal:
/// `sqrt(2 / ((1 + slope^2) fan_in))`.
pub fn kaiming_std(fan_in: usize, slope: f64) -> f64 {
    (2.0 / ((1.0 + slope * slope) * fan_in as f64)).sqrt()
}

pub fn kaiming_normal<T: Scalar>(shape: &[usize], fan_in: usize, slope: f64, rng: &mut impl Rng) -> Result<Tensor<T>> {
    if fan_in == 0 {
        return Err(invalid("kaiming_normal: fan_in must be positive"));
    }
    let normal = Normal::new(0.0, kaiming_std(fan_in, slope)).map_err(|e| invalid(e.to_string()))?;
    Tensor::from_fn(shape, |_| T::of(normal.sample(rng)))
}

/// ICNR initialization for a conv feeding `pixel_shuffle(r)`.
///
/// `shape` is `[C r^2, C_in, ...kernel]`. A Kaiming tensor for `C` output
/// channels is drawn and output channel `c r^2 + s` is set to sub-kernel
/// `c` for every `s`, so the shuffled output starts as a nearest-neighbour
/// upsampling of a `C`-channel convolution.
pub fn icnr<T: Scalar>(shape: &[usize], r: usize, fan_in: usize, slope: f64, rng: &mut impl Rng) -> Result<Tensor<T>> {
    let rr = r * r;
    if r == 0 || shape.is_empty() || !shape[0].is_multiple_of(rr) {
        return Err(invalid(format!("icnr: leading extent of {shape:?} not divisible by r^2 = {rr}")));
    }
    let mut sub_shape = shape.to_vec();
    sub_shape[0] /= rr;
    let sub: Tensor<T> = kaiming_normal(&sub_shape, fan_in, slope, rng)?;
    let per_out: usize = shape[1..].iter().product();
    let mut data = Vec::with_capacity(shape.iter().product());
    for c in 0..sub_shape[0] {
        for _ in 0..rr {
            data.extend_from_slice(&sub.data()[c * per_out..(c + 1) * per_out]);
        }
    }
    Tensor::new(shape, data)
}

/// Deterministic per-parameter initializer.
///
/// Each parameter draws from its own generator seeded by the network seed
/// and a hash of the parameter's name, so values do not depend on
/// construction order.
#[derive(Clone, Debug)]
pub struct Initializer {
    pub seed: u64,
    pub slope: f64,
}

impl Initializer {
    pub fn new(seed: u64, slope: f64) -> Self {
        Self { seed, slope }
    }

    pub fn rng_for(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(name.as_bytes()))
    }

    pub fn kaiming<T: Scalar>(&self, name: &str, shape: &[usize], fan_in: usize) -> Result<Tensor<T>> {
        kaiming_normal(shape, fan_in, self.slope, &mut self.rng_for(name))
    }

    pub fn icnr<T: Scalar>(&self, name: &str, shape: &[usize], r: usize, fan_in: usize) -> Result<Tensor<T>> {
        icnr(shape, r, fan_in, self.slope, &mut self.rng_for(name))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_gives_identical_tensor() {
        let a: Tensor<f32> = kaiming_normal(&[4, 3, 3], 27, 0.1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b: Tensor<f32> = kaiming_normal(&[4, 3, 3], 27, 0.1, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn icnr_groups_are_identical() {
        let w: Tensor<f64> = icnr(&[8, 3, 1, 1], 2, 3, 0.1, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let d = w.data();
        for c in 0..2 {
            for s in 1..4 {
                assert_eq!(&d[(c * 4) * 3..(c * 4 + 1) * 3], &d[(c * 4 + s) * 3..(c * 4 + s + 1) * 3]);
            }
        }
        assert_ne!(&d[0..3], &d[12..15]);
    }

    #[test]
    fn icnr_with_unit_factor_is_plain_kaiming() {
        let a: Tensor<f64> = icnr(&[5, 2, 3, 3], 1, 18, 0.1, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b: Tensor<f64> = kaiming_normal(&[5, 2, 3, 3], 18, 0.1, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn names_pick_distinct_streams() {
        let init = Initializer::new(7, 0.1);
        let a: Tensor<f32> = init.kaiming("a.weight", &[16], 4).unwrap();
        let b: Tensor<f32> = init.kaiming("b.weight", &[16], 4).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, init.kaiming("a.weight", &[16], 4).unwrap());
    }
}
