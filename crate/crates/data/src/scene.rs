//! Synthetic gesture videos: one shape moving over a textured background,
//! with a depth map known in closed form.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rc3d_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};

/// The sixteen sign words; class `i` uses trajectory `i`.
pub const CLASS_NAMES: [&str; 16] = [
    "alarm", "call", "lock", "movie", "no", "off", "on", "rain", "reminder", "set", "sports", "today", "tomorrow", "weather", "yes", "nothing",
];

pub const CLASS_COUNT: usize = 16;
pub const MIN_FRAMES: usize = 6;
pub const MAX_FRAMES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Disc,
    Rectangle,
}

/// Motion pattern `0..16`: start, middle and end point of the path in units
/// of the free travel range, joined by straight segments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory(u8);

const KEY_POINTS: [[(f64, f64); 3]; CLASS_COUNT] = [
    [(-1.0, 0.0), (0.0, 0.0), (1.0, 0.0)],
    [(1.0, 0.0), (0.0, 0.0), (-1.0, 0.0)],
    [(0.0, -1.0), (0.0, 0.0), (0.0, 1.0)],
    [(0.0, 1.0), (0.0, 0.0), (0.0, -1.0)],
    [(-1.0, -1.0), (0.0, 0.0), (1.0, 1.0)],
    [(1.0, 1.0), (0.0, 0.0), (-1.0, -1.0)],
    [(-1.0, 1.0), (0.0, 0.0), (1.0, -1.0)],
    [(1.0, -1.0), (0.0, 0.0), (-1.0, 1.0)],
    [(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)],
    [(0.0, 0.0), (-1.0, 0.0), (0.0, 0.0)],
    [(0.0, 0.0), (0.0, 1.0), (0.0, 0.0)],
    [(0.0, 0.0), (0.0, -1.0), (0.0, 0.0)],
    [(-1.0, 0.0), (0.0, -1.0), (1.0, 0.0)],
    [(-1.0, 0.0), (0.0, 1.0), (1.0, 0.0)],
    [(-1.0, -1.0), (0.0, 1.0), (1.0, -1.0)],
    [(0.0, 0.0), (0.0, 0.0), (0.0, 0.0)],
];

impl Trajectory {
    pub fn new(id: usize) -> Result<Self> {
        if id >= CLASS_COUNT {
            return Err(DataError::Invalid(format!("trajectory id {id} out of range 0..{CLASS_COUNT}")));
        }
        Ok(Self(id as u8))
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }

    pub fn is_static(self) -> bool {
        KEY_POINTS[self.id()].iter().all(|&p| p == (0.0, 0.0))
    }

    /// Normalised position in `[-1, 1]²` at path fraction `s ∈ [0, 1]`.
    pub fn position(self, s: f64) -> (f64, f64) {
        let [a, m, b] = KEY_POINTS[self.id()];
        let s = s.clamp(0.0, 1.0);
        let (p, q, t) = if s <= 0.5 { (a, m, 2.0 * s) } else { (m, b, 2.0 * s - 1.0) };
        (p.0 + (q.0 - p.0) * t, p.1 + (q.1 - p.1) * t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub extent: usize,
    pub frames: usize,
    pub shape: ShapeKind,
    pub trajectory: Trajectory,
    /// Disc radius or rectangle half-side, pixels.
    pub size: f64,
    /// Depth of the background plane.
    pub base_depth: f64,
    pub shape_depth: f64,
    /// Fraction of the free travel range used by the trajectory.
    pub travel: f64,
    /// Standard deviation of per-pixel sensor noise on the RGB frames.
    pub noise: f64,
}

impl SceneSpec {
    /// Random scene of class `label`. Larger shapes sit nearer the camera.
    pub fn sample(label: usize, extent: usize, noise: f64, rng: &mut impl Rng) -> Result<Self> {
        let trajectory = Trajectory::new(label)?;
        let (lo, hi) = Self::size_range(extent);
        let size = rng.random_range(lo..hi);
        let nearness = (size - lo) / (hi - lo);
        let spec = Self {
            extent,
            frames: rng.random_range(MIN_FRAMES..=MAX_FRAMES),
            shape: if rng.random_bool(0.5) { ShapeKind::Disc } else { ShapeKind::Rectangle },
            trajectory,
            size,
            base_depth: rng.random_range(0.75..0.9),
            shape_depth: 0.45 - 0.25 * nearness,
            travel: rng.random_range(0.8..1.0),
            noise,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn size_range(extent: usize) -> (f64, f64) {
        (extent as f64 * 0.09, extent as f64 * 0.16)
    }

    pub fn validate(&self) -> Result<()> {
        if self.extent < 16 {
            return Err(DataError::Invalid(format!("scene extent {} below 16", self.extent)));
        }
        if !(MIN_FRAMES..=MAX_FRAMES).contains(&self.frames) {
            return Err(DataError::Invalid(format!("frame count {} outside {MIN_FRAMES}..={MAX_FRAMES}", self.frames)));
        }
        if !(self.size >= 1.0 && self.size < self.extent as f64 / 2.0 - 1.0) {
            return Err(DataError::Invalid(format!("shape size {} does not fit extent {}", self.size, self.extent)));
        }
        let depths = [self.base_depth, self.shape_depth];
        if depths.iter().any(|d| !(0.0..=1.0).contains(d)) {
            return Err(DataError::Invalid(format!("depths {depths:?} outside [0, 1]")));
        }
        if !(0.0..=1.0).contains(&self.travel) || self.noise.is_nan() || self.noise < 0.0 {
            return Err(DataError::Invalid("travel must lie in [0, 1] and noise be non-negative".into()));
        }
        Ok(())
    }

    /// Shape centre in pixels at frame `t`. The travel range keeps the whole
    /// shape (rectangle corners included) at least one pixel from the border.
    pub fn centre(&self, t: usize) -> (f64, f64) {
        let s = if self.frames > 1 { t as f64 / (self.frames - 1) as f64 } else { 0.0 };
        let (nx, ny) = self.trajectory.position(s);
        let mid = (self.extent as f64 - 1.0) / 2.0;
        let range = (mid - self.size - 1.0) * self.travel;
        (mid + nx * range, mid + ny * range)
    }

    pub fn covers(&self, t: usize, x: f64, y: f64) -> bool {
        let (cx, cy) = self.centre(t);
        match self.shape {
            ShapeKind::Disc => (x - cx).powi(2) + (y - cy).powi(2) <= self.size * self.size,
            ShapeKind::Rectangle => (x - cx).abs() <= self.size && (y - cy).abs() <= self.size,
        }
    }

    /// Depth before smoothing.
    pub fn raw_depth(&self, t: usize, x: usize, y: usize) -> f64 {
        if self.covers(t, x as f64, y as f64) {
            self.shape_depth
        } else {
            self.base_depth
        }
    }
}

/// A labelled clip of `T` frames; `rgb` is `[T,3,H,W]`, `depth` `[T,1,H,W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GestureVideo {
    pub rgb: Tensor<f32>,
    pub depth: Tensor<f32>,
    pub label: usize,
    pub seed: u64,
    pub spec: SceneSpec,
}

impl GestureVideo {
    pub fn frames(&self) -> usize {
        self.rgb.shape()[0]
    }

    pub fn extent(&self) -> usize {
        self.rgb.shape()[2]
    }
}

struct Palette {
    background: [[f64; 3]; 2],
    shape: [f64; 3],
    waves: [(f64, f64, f64); 2],
}

fn hue_colour(h: f64, s: f64, v: f64) -> [f64; 3] {
    let k = |n: f64| {
        let k = (n + h * 6.0) % 6.0;
        v - v * s * k.min(4.0 - k).clamp(0.0, 1.0)
    };
    [k(5.0), k(3.0), k(1.0)]
}

impl Palette {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        let bh = rng.random_range(0.0..1.0);
        let background = [hue_colour(bh, 0.25, 0.45), hue_colour((bh + 0.1) % 1.0, 0.25, 0.6)];
        let shape = hue_colour(rng.random_range(0.0..1.0), rng.random_range(0.7..1.0), rng.random_range(0.85..1.0));
        let mut wave = || (rng.random_range(1.0..4.0), rng.random_range(1.0..4.0), rng.random_range(0.0..std::f64::consts::TAU));
        let waves = [wave(), wave()];
        Self { background, shape, waves }
    }

    fn background_at(&self, x: usize, y: usize, extent: usize) -> [f64; 3] {
        let t = std::f64::consts::TAU / extent as f64;
        let m: f64 = self.waves.iter().map(|&(fx, fy, ph)| (t * (fx * x as f64 + fy * y as f64) + ph).sin()).sum::<f64>() * 0.25 + 0.5;
        std::array::from_fn(|c| self.background[0][c] * (1.0 - m) + self.background[1][c] * m)
    }
}

/// Renders `spec` with colours and sensor noise drawn from `seed`.
///
/// The depth frame is the raw depth under a 3x3 box blur with replicated
/// borders.
pub fn generate_sample(spec: &SceneSpec, seed: u64) -> Result<GestureVideo> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let palette = Palette::sample(&mut rng);
    let (n, tn) = (spec.extent, spec.frames);
    let noise = Normal::new(0.0, spec.noise.max(0.0)).map_err(|e| DataError::Invalid(e.to_string()))?;
    let mut rgb = vec![0.0f32; tn * 3 * n * n];
    let mut depth = vec![0.0f32; tn * n * n];
    let mut raw = vec![0.0f64; n * n];
    for t in 0..tn {
        for y in 0..n {
            for x in 0..n {
                let colour = if spec.covers(t, x as f64, y as f64) { palette.shape } else { palette.background_at(x, y, n) };
                for (c, v) in colour.into_iter().enumerate() {
                    let jitter = if spec.noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    rgb[((t * 3 + c) * n + y) * n + x] = (v + jitter).clamp(0.0, 1.0) as f32;
                }
                raw[y * n + x] = spec.raw_depth(t, x, y);
            }
        }
        let at = |x: isize, y: isize| raw[y.clamp(0, n as isize - 1) as usize * n + x.clamp(0, n as isize - 1) as usize];
        for y in 0..n as isize {
            for x in 0..n as isize {
                let s: f64 = (-1..=1).flat_map(|dy| (-1..=1).map(move |dx| (dx, dy))).map(|(dx, dy)| at(x + dx, y + dy)).sum();
                depth[(t * n + y as usize) * n + x as usize] = (s / 9.0) as f32;
            }
        }
    }
    Ok(GestureVideo {
        rgb: Tensor::new(&[tn, 3, n, n], rgb)?,
        depth: Tensor::new(&[tn, 1, n, n], depth)?,
        label: spec.trajectory.id(),
        seed,
        spec: spec.clone(),
    })
}
