//! Coarse-to-fine dense flow from matched polynomial expansions.
//!
//! At every pixel the previous frame's quadratic `(A1, b1, c1)` is compared
//! with the next frame's quadratic `(A2, b2, c2)` sampled at the displaced
//! position `x + d0`. A pure translation by `d` gives
//!
//! ```text
//! A d    = -(b2 - b1)/2 + A d0        A    = (A1 + A2)/2
//! b̄ᵀ d   = c1 - c2 + b̄ᵀ d0            b̄    = (b1 + b2)/2
//! ```
//!
//! The second row is the brightness-constancy constraint written with the
//! fitted coefficients; it keeps linear-intensity regions (where `A = 0`)
//! from being blind to motion. Both rows are aggregated over a box window in
//! the least-squares sense and solved with a small relative ridge term.

use rc3d_core::Tensor;

use crate::error::{FlowError, Result};
use crate::frame::{check_extents, IntensityFrame, Plane};
use crate::poly::{check_poly, expand};

/// Smallest pyramid level still processed.
pub const MIN_EXTENT: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FarnebackParams {
    pub pyramid_levels: usize,
    pub pyramid_scale: f64,
    pub window_size: usize,
    pub iterations: usize,
    pub poly_n: usize,
    pub poly_sigma: f64,
}

impl Default for FarnebackParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            pyramid_scale: 0.5,
            window_size: 15,
            iterations: 3,
            poly_n: 5,
            poly_sigma: 1.1,
        }
    }
}

impl FarnebackParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return Err(FlowError::Invalid(format!("pyramid_scale must lie in (0, 1), got {}", self.pyramid_scale)));
        }
        if self.window_size == 0 || self.window_size.is_multiple_of(2) {
            return Err(FlowError::Invalid(format!("window_size must be odd, got {}", self.window_size)));
        }
        if self.pyramid_levels == 0 || self.iterations == 0 {
            return Err(FlowError::Invalid("pyramid_levels and iterations must be at least 1".into()));
        }
        check_poly(self.poly_n, self.poly_sigma)
    }
}

/// Displacement of image content from the previous to the next frame, in
/// pixels per frame: `next(x + u, y + v) ≈ prev(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn magnitudes(&self) -> Vec<f32> {
        self.u.iter().zip(&self.v).map(|(u, v)| u.hypot(*v)).collect()
    }

    /// `[2,H,W]`, u then v.
    pub fn to_tensor(&self) -> Tensor<f32> {
        let data = self.u.iter().chain(&self.v).copied().collect();
        Tensor::new(&[2, self.height, self.width], data).expect("extents match")
    }

    pub fn from_tensor(t: &Tensor<f32>) -> Result<Self> {
        let &[2, h, w] = t.shape() else {
            return Err(FlowError::Invalid(format!("expected a [2,H,W] flow tensor, got {:?}", t.shape())));
        };
        let (u, v) = t.data().split_at(h * w);
        Ok(Self {
            width: w,
            height: h,
            u: u.to_vec(),
            v: v.to_vec(),
        })
    }
}

fn level_extents(w: usize, h: usize, p: &FarnebackParams) -> Vec<(usize, usize)> {
    let mut out = vec![(w, h)];
    for k in 1..p.pyramid_levels {
        let s = p.pyramid_scale.powi(k as i32);
        let e = ((w as f64 * s).round() as usize, (h as f64 * s).round() as usize);
        if e.0 < MIN_EXTENT || e.1 < MIN_EXTENT {
            break;
        }
        out.push(e);
    }
    out
}

pub fn farneback_flow(prev: &IntensityFrame, next: &IntensityFrame, params: &FarnebackParams) -> Result<FlowField> {
    check_extents(prev, next)?;
    params.validate()?;
    let (w, h) = prev.extents();
    if w < MIN_EXTENT || h < MIN_EXTENT {
        return Err(FlowError::Invalid(format!("flow needs frames of at least {MIN_EXTENT}x{MIN_EXTENT}, got {w}x{h}")));
    }
    let (p0, n0) = (prev.wide(), next.wide());
    let levels = level_extents(w, h, params);

    let mut flow: Option<(Plane, Plane)> = None;
    for &(lw, lh) in levels.iter().rev() {
        let (pl, nl) = if (lw, lh) == (w, h) { (p0.clone(), n0.clone()) } else { (p0.downscale(lw, lh), n0.downscale(lw, lh)) };
        let (mut u, mut v) = match flow {
            None => (Plane::zeros(lw, lh), Plane::zeros(lw, lh)),
            Some((u, v)) => {
                let (sx, sy) = (lw as f64 / u.width as f64, lh as f64 / u.height as f64);
                let mut u = u.resize(lw, lh);
                let mut v = v.resize(lw, lh);
                u.data.iter_mut().for_each(|x| *x *= sx);
                v.data.iter_mut().for_each(|y| *y *= sy);
                (u, v)
            }
        };
        let e1 = expand(&pl, params.poly_n, params.poly_sigma).planes();
        let e2 = expand(&nl, params.poly_n, params.poly_sigma).planes();
        for _ in 0..params.iterations {
            update(&e1, &e2, &mut u, &mut v, params.window_size);
        }
        flow = Some((u, v));
    }
    let (u, v) = flow.expect("at least one level");
    Ok(FlowField {
        width: w,
        height: h,
        u: u.data.iter().map(|&x| x as f32).collect(),
        v: v.data.iter().map(|&x| x as f32).collect(),
    })
}

/// Relative ridge added to the aggregated normal matrix.
const RIDGE: f64 = 1e-3;

fn update(e1: &[Plane; 6], e2: &[Plane; 6], u: &mut Plane, v: &mut Plane, window: usize) {
    let (w, h) = (u.width, u.height);
    // m11, m12, m22, r1, r2
    let mut sys: [Plane; 5] = std::array::from_fn(|_| Plane::zeros(w, h));
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let d0 = [u.data[i], v.data[i]];
            let (px, py) = (x as f64 + d0[0], y as f64 + d0[1]);
            if px < 0.0 || py < 0.0 || px > (w - 1) as f64 || py > (h - 1) as f64 {
                continue;
            }
            let q1: [f64; 6] = std::array::from_fn(|k| e1[k].data[i]);
            let q2: [f64; 6] = std::array::from_fn(|k| e2[k].sample(px, py));
            let a = [0.5 * (q1[0] + q2[0]), 0.5 * (q1[1] + q2[1]), 0.5 * (q1[2] + q2[2])];
            let bbar = [0.5 * (q1[3] + q2[3]), 0.5 * (q1[4] + q2[4])];
            let db = [
                -0.5 * (q2[3] - q1[3]) + a[0] * d0[0] + a[1] * d0[1],
                -0.5 * (q2[4] - q1[4]) + a[1] * d0[0] + a[2] * d0[1],
            ];
            let hc = q1[5] - q2[5] + bbar[0] * d0[0] + bbar[1] * d0[1];
            sys[0].data[i] = a[0] * a[0] + a[1] * a[1] + bbar[0] * bbar[0];
            sys[1].data[i] = a[0] * a[1] + a[1] * a[2] + bbar[0] * bbar[1];
            sys[2].data[i] = a[1] * a[1] + a[2] * a[2] + bbar[1] * bbar[1];
            sys[3].data[i] = a[0] * db[0] + a[1] * db[1] + bbar[0] * hc;
            sys[4].data[i] = a[1] * db[0] + a[2] * db[1] + bbar[1] * hc;
        }
    }
    let sys = sys.map(|p| p.box_mean(window));
    let mean_trace = sys[0].data.iter().zip(&sys[2].data).map(|(a, b)| a + b).sum::<f64>() / (w * h) as f64;
    let ridge = RIDGE * 0.5 * mean_trace + 1e-15;
    for i in 0..w * h {
        let (m11, m12, m22) = (sys[0].data[i] + ridge, sys[1].data[i], sys[2].data[i] + ridge);
        let (r1, r2) = (sys[3].data[i], sys[4].data[i]);
        let det = m11 * m22 - m12 * m12;
        u.data[i] = (m22 * r1 - m12 * r2) / det;
        v.data[i] = (m11 * r2 - m12 * r1) / det;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn texture(w: usize, h: usize, dx: i32, dy: i32) -> IntensityFrame {
        IntensityFrame::from_fn(w, h, |x, y| {
            let (x, y) = ((x as i32 - dx).rem_euclid(w as i32) as f32, (y as i32 - dy).rem_euclid(h as i32) as f32);
            let t = std::f32::consts::TAU / w as f32;
            0.5 + 0.2 * (t * (2.0 * x + y)).sin() + 0.15 * (t * (3.0 * y - x) + 1.0).cos() + 0.1 * (t * 5.0 * x).sin() * (t * 4.0 * y).cos()
        })
        .unwrap()
    }

    #[test]
    fn zero_motion_is_zero() {
        let f = texture(32, 32, 0, 0);
        let flow = farneback_flow(&f, &f, &FarnebackParams::default()).unwrap();
        assert!(flow.magnitudes().iter().all(|m| *m < 1e-6));
    }

    #[test]
    fn recovers_small_shift() {
        let flow = farneback_flow(&texture(32, 32, 0, 0), &texture(32, 32, 1, 0), &FarnebackParams::default()).unwrap();
        let (u, v) = flow.at(16, 16);
        assert!((u - 1.0).abs() < 0.2 && v.abs() < 0.2, "{u} {v}");
    }

    #[test]
    fn params_and_extents_are_checked() {
        let p = FarnebackParams { window_size: 4, ..Default::default() };
        assert!(p.validate().is_err());
        assert!(FarnebackParams { pyramid_scale: 1.0, ..Default::default() }.validate().is_err());
        assert!(FarnebackParams { poly_n: 6, ..Default::default() }.validate().is_err());
        let small = IntensityFrame::from_fn(4, 4, |_, _| 0.0).unwrap();
        assert!(farneback_flow(&small, &small, &FarnebackParams::default()).is_err());
        assert_eq!(level_extents(64, 64, &FarnebackParams::default()), vec![(64, 64), (32, 32), (16, 16)]);
        assert_eq!(level_extents(20, 20, &FarnebackParams::default()), vec![(20, 20), (10, 10)]);
    }

    #[test]
    fn tensor_roundtrip() {
        let mut f = FlowField::zeros(3, 2);
        f.u[4] = 1.5;
        f.v[1] = -2.0;
        assert_eq!(FlowField::from_tensor(&f.to_tensor()).unwrap(), f);
    }
}
