//! Image filters on `[C,H,W]` tensors with values in `[0, 1]`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rc3d_core::Tensor;

use crate::error::{DataError, Result};

/// Largest rotation magnitude drawn by [`random_rotate`], in degrees.
pub const MAX_ROTATION_DEG: f64 = 30.0;

pub fn chw(img: &Tensor<f32>) -> Result<(usize, usize, usize)> {
    match *img.shape() {
        [c, h, w] if c > 0 && h > 0 && w > 0 => Ok((c, h, w)),
        _ => Err(DataError::Invalid(format!("expected a [C,H,W] image, got {:?}", img.shape()))),
    }
}

fn lanczos(x: f64, a: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else if x.abs() >= a {
        0.0
    } else {
        let px = PI * x;
        a * px.sin() * (px / a).sin() / (px * px)
    }
}

/// Normalised taps `(first source index, weights)` for every output index.
fn lanczos_taps(src: usize, dst: usize, a: usize) -> Vec<(isize, Vec<f64>)> {
    let scale = dst as f64 / src as f64;
    // widen the kernel when shrinking so it low-passes
    let stretch = scale.min(1.0);
    let support = a as f64 / stretch;
    (0..dst)
        .map(|o| {
            let centre = (o as f64 + 0.5) / scale - 0.5;
            let first = (centre - support).ceil() as isize;
            let last = (centre + support).floor() as isize;
            let raw: Vec<f64> = (first..=last).map(|i| lanczos((centre - i as f64) * stretch, a as f64)).collect();
            let s: f64 = raw.iter().sum();
            (first, raw.into_iter().map(|w| w / s).collect())
        })
        .collect()
}

/// Separable Lanczos resampling with kernel support `a`, borders replicated,
/// output clamped to `[0, 1]`.
pub fn lanczos_resize(img: &Tensor<f32>, out: (usize, usize), a: usize) -> Result<Tensor<f32>> {
    let (c, h, w) = chw(img)?;
    let (oh, ow) = out;
    if oh == 0 || ow == 0 || a == 0 {
        return Err(DataError::Invalid(format!("lanczos_resize to {oh}x{ow} with a = {a}")));
    }
    let tx = lanczos_taps(w, ow, a);
    let ty = lanczos_taps(h, oh, a);
    let d = img.data();
    let mut out_data = Vec::with_capacity(c * oh * ow);
    let mut rows = vec![0.0f64; h * ow];
    for ch in 0..c {
        let plane = &d[ch * h * w..(ch + 1) * h * w];
        for y in 0..h {
            for (x, (first, wts)) in tx.iter().enumerate() {
                rows[y * ow + x] = wts.iter().enumerate().map(|(k, wt)| wt * plane[y * w + (first + k as isize).clamp(0, w as isize - 1) as usize] as f64).sum();
            }
        }
        for (first, wts) in &ty {
            for x in 0..ow {
                let v: f64 = wts.iter().enumerate().map(|(k, wt)| wt * rows[(first + k as isize).clamp(0, h as isize - 1) as usize * ow + x]).sum();
                out_data.push(v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    Ok(Tensor::new(&[c, oh, ow], out_data)?)
}

/// 3x3 kernel, all -1 with 10 in the centre, divided by 2.
pub const EDGE_ENHANCE: [[f32; 3]; 3] = [[-0.5, -0.5, -0.5], [-0.5, 5.0, -0.5], [-0.5, -0.5, -0.5]];

/// Unclamped 3x3 correlation with replicated borders.
pub fn convolve3x3(img: &Tensor<f32>, kernel: &[[f32; 3]; 3]) -> Result<Tensor<f32>> {
    let (c, h, w) = chw(img)?;
    let d = img.data();
    let at = |ch: usize, y: isize, x: isize| d[ch * h * w + y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize];
    let mut out = Vec::with_capacity(d.len());
    for ch in 0..c {
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = 0.0;
                for (ky, row) in kernel.iter().enumerate() {
                    for (kx, k) in row.iter().enumerate() {
                        acc += k * at(ch, y + ky as isize - 1, x + kx as isize - 1);
                    }
                }
                out.push(acc);
            }
        }
    }
    Ok(Tensor::new(&[c, h, w], out)?)
}

pub fn edge_enhance(img: &Tensor<f32>) -> Result<Tensor<f32>> {
    Ok(convolve3x3(img, &EDGE_ENHANCE)?.map(|v| v.clamp(0.0, 1.0)))
}

/// Rotation by `deg` (counter-clockwise on screen) about the image centre,
/// bilinear; samples falling outside the frame read as 0.
pub fn rotate(img: &Tensor<f32>, deg: f64) -> Result<Tensor<f32>> {
    let (c, h, w) = chw(img)?;
    if deg == 0.0 {
        return Ok(img.clone());
    }
    let (s, co) = (-deg.to_radians()).sin_cos();
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let d = img.data();
    let tol = 1e-6;
    let mut out = vec![0.0f32; d.len()];
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            // inverse map: output pixel back to the source
            let sx = cx + co * dx + s * dy;
            let sy = cy - s * dx + co * dy;
            if sx < -tol || sy < -tol || sx > w as f64 - 1.0 + tol || sy > h as f64 - 1.0 + tol {
                continue;
            }
            let (sx, sy) = (sx.clamp(0.0, w as f64 - 1.0), sy.clamp(0.0, h as f64 - 1.0));
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            for ch in 0..c {
                let p = |yy: usize, xx: usize| d[ch * h * w + yy * w + xx] as f64;
                let v = (p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx) * (1.0 - fy) + (p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx) * fy;
                out[ch * h * w + y * w + x] = v as f32;
            }
        }
    }
    Ok(Tensor::new(&[c, h, w], out)?)
}

/// Uniform angle in `[-30°, 30°]`.
pub fn rotation_angle(rng: &mut impl Rng) -> f64 {
    rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG)
}

pub fn random_rotate(img: &Tensor<f32>, rng: &mut impl Rng) -> Result<Tensor<f32>> {
    rotate(img, rotation_angle(rng))
}

/// Adds `N(0, sigma²)` per element and clamps to `[0, 1]`.
pub fn gaussian_noise(img: &Tensor<f32>, sigma: f64, rng: &mut impl Rng) -> Result<Tensor<f32>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(DataError::Invalid(format!("noise sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| DataError::Invalid(e.to_string()))?;
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = (*v as f64 + normal.sample(rng)).clamp(0.0, 1.0) as f32;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn img(c: usize, h: usize, w: usize, f: impl Fn(usize, usize, usize) -> f32) -> Tensor<f32> {
        Tensor::from_fn(&[c, h, w], |i| f(i / (h * w), (i / w) % h, i % w)).unwrap()
    }

    #[test]
    fn lanczos_identity_and_constant() {
        let x = img(2, 9, 11, |c, y, x| ((c * 7 + y * 3 + x * 5) % 13) as f32 / 13.0);
        assert!(lanczos_resize(&x, (9, 11), 3).unwrap().max_abs_diff(&x) < 1e-6);
        let k = img(1, 10, 10, |_, _, _| 0.37);
        for out in [(5, 5), (17, 4), (10, 23)] {
            let y = lanczos_resize(&k, out, 3).unwrap();
            assert!(y.data().iter().all(|v| (v - 0.37).abs() < 1e-6));
        }
    }

    #[test]
    fn edge_kernel_sums_to_one() {
        let s: f32 = EDGE_ENHANCE.iter().flatten().sum();
        assert_eq!(s, 1.0);
        let k = img(3, 5, 5, |_, _, _| 0.6);
        assert!(edge_enhance(&k).unwrap().max_abs_diff(&k) < 1e-6);
    }

    #[test]
    fn step_edge_overshoots_on_the_bright_side() {
        let step = img(1, 5, 8, |_, _, x| if x < 4 { 0.2 } else { 0.6 });
        let y = convolve3x3(&step, &EDGE_ENHANCE).unwrap();
        // bright pixel next to the edge: 5*0.6 - 0.5*(3*0.2 + 5*0.6)
        let direct = 5.0 * 0.6 - 0.5 * (3.0 * 0.2 + 5.0 * 0.6);
        assert!((y.at(&[0, 2, 4]) - direct).abs() < 1e-6);
        assert!(y.at(&[0, 2, 4]) > 0.6);
    }

    #[test]
    fn rotation_hooks() {
        let x = img(3, 12, 12, |c, y, x| ((c * 5 + y * 11 + x * 3) % 17) as f32 / 17.0);
        assert_eq!(rotate(&x, 0.0).unwrap(), x);
        let mut y = x.clone();
        for _ in 0..4 {
            y = rotate(&y, 90.0).unwrap();
        }
        assert!(y.max_abs_diff(&x) < 1e-2);
        // a quarter turn moves the top-left corner to the bottom-left
        let q = rotate(&x, 90.0).unwrap();
        assert!((q.at(&[0, 11, 0]) - x.at(&[0, 0, 0])).abs() < 1e-5);
    }

    #[test]
    fn noise_is_clamped_and_identity_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = img(1, 8, 8, |_, y, _| y as f32 / 7.0);
        assert_eq!(gaussian_noise(&x, 0.0, &mut rng).unwrap(), x);
        let y = gaussian_noise(&x, 0.5, &mut rng).unwrap();
        assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(gaussian_noise(&x, -1.0, &mut rng).is_err());
    }
}
