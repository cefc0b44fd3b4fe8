use rc3d_core::Tensor;

use crate::error::{FlowError, Result};

/// Grayscale frame, row-major, nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IntensityFrame {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl IntensityFrame {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(FlowError::Invalid(format!("{width}x{height} frame cannot hold {} values", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FlowError::Invalid(format!("non-finite intensity at pixel {i}")));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let data = (0..width * height).map(|i| f(i % width, i / width)).collect();
        Self::new(width, height, data)
    }

    /// Luma `0.299 R + 0.587 G + 0.114 B` of a `[3,H,W]` image.
    pub fn from_rgb(img: &Tensor<f32>) -> Result<Self> {
        let &[3, h, w] = img.shape() else {
            return Err(FlowError::Invalid(format!("expected a [3,H,W] image, got {:?}", img.shape())));
        };
        let d = img.data();
        let n = h * w;
        let data = (0..n).map(|i| 0.299 * d[i] + 0.587 * d[n + i] + 0.114 * d[2 * n + i]).collect();
        Self::new(w, h, data)
    }

    /// `[1,H,W]` or `[H,W]` tensor.
    pub fn from_tensor(t: &Tensor<f32>) -> Result<Self> {
        match *t.shape() {
            [1, h, w] | [h, w] => Self::new(w, h, t.data().to_vec()),
            _ => Err(FlowError::Invalid(format!("expected a [1,H,W] frame, got {:?}", t.shape()))),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn extents(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub(crate) fn wide(&self) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }
}

/// Per-pixel partial derivatives between two frames.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameGradients {
    pub width: usize,
    pub height: usize,
    pub fx: Vec<f32>,
    pub fy: Vec<f32>,
    pub ft: Vec<f32>,
}

impl FrameGradients {
    pub fn at(&self, x: usize, y: usize) -> (f32, f32, f32) {
        let i = y * self.width + x;
        (self.fx[i], self.fy[i], self.ft[i])
    }
}

pub(crate) fn check_extents(prev: &IntensityFrame, next: &IntensityFrame) -> Result<()> {
    if prev.extents() != next.extents() {
        return Err(FlowError::ExtentMismatch {
            prev: prev.extents(),
            next: next.extents(),
        });
    }
    Ok(())
}

/// Spatial central differences on the mean of the two frames, one-sided at
/// the borders; `f_t = next - prev`.
pub fn image_gradients(prev: &IntensityFrame, next: &IntensityFrame) -> Result<FrameGradients> {
    check_extents(prev, next)?;
    let (w, h) = prev.extents();
    let avg: Vec<f32> = prev.data.iter().zip(&next.data).map(|(a, b)| 0.5 * (a + b)).collect();
    let diff = |lo: usize, hi: usize, i_lo: usize, i_hi: usize| (avg[i_hi] - avg[i_lo]) / (hi - lo).max(1) as f32;
    let mut fx = vec![0.0; w * h];
    let mut fy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (y0, y1) = (y.saturating_sub(1), (y + 1).min(h - 1));
            fx[y * w + x] = diff(x0, x1, y * w + x0, y * w + x1);
            fy[y * w + x] = diff(y0, y1, y0 * w + x, y1 * w + x);
        }
    }
    let ft = prev.data.iter().zip(&next.data).map(|(a, b)| b - a).collect();
    Ok(FrameGradients { width: w, height: h, fx, fy, ft })
}

/// f64 working image used inside the flow computation.
#[derive(Clone, Debug)]
pub(crate) struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    /// Bilinear sample with replicated borders.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        let top = self.clamped(x0, y0) * (1.0 - fx) + self.clamped(x0 + 1, y0) * fx;
        let bottom = self.clamped(x0, y0 + 1) * (1.0 - fx) + self.clamped(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Separable filter with replicated borders; `taps` has odd length.
    pub fn filter(&self, taps: &[f64]) -> Self {
        let r = (taps.len() / 2) as isize;
        let (w, h) = (self.width, self.height);
        let mut tmp = Self::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                tmp.data[y * w + x] = taps.iter().enumerate().map(|(k, t)| t * self.clamped(x as isize + k as isize - r, y as isize)).sum();
            }
        }
        let mut out = Self::zeros(w, h);
        for y in 0..h {
            for x in 0..w {
                out.data[y * w + x] = taps.iter().enumerate().map(|(k, t)| t * tmp.clamped(x as isize, y as isize + k as isize - r)).sum();
            }
        }
        out
    }

    /// Box mean over a `size x size` window; running sums, replicated borders.
    pub fn box_mean(&self, size: usize) -> Self {
        let r = (size / 2) as isize;
        let (w, h) = (self.width, self.height);
        let norm = 1.0 / size as f64;
        let run = |get: &dyn Fn(isize) -> f64, n: usize, out: &mut dyn FnMut(usize, f64)| {
            let mut acc: f64 = (-r..=r).map(get).sum();
            for i in 0..n {
                out(i, acc * norm);
                acc += get(i as isize + r + 1) - get(i as isize - r);
            }
        };
        let mut tmp = Self::zeros(w, h);
        for y in 0..h {
            run(&|x| self.clamped(x, y as isize), w, &mut |x, v| tmp.data[y * w + x] = v);
        }
        let mut out = Self::zeros(w, h);
        for x in 0..w {
            run(&|y| tmp.clamped(x as isize, y), h, &mut |y, v| out.data[y * w + x] = v);
        }
        out
    }

    /// Gaussian pre-blur then bilinear resampling to `width x height`.
    pub fn downscale(&self, width: usize, height: usize) -> Self {
        let scale = width as f64 / self.width as f64;
        let sigma = (1.0 / scale - 1.0).max(0.0) * 0.5;
        let src = if sigma > 0.0 { self.filter(&gaussian_taps(sigma, (3.0 * sigma).ceil().max(1.0) as usize)) } else { self.clone() };
        self.resample_from(&src, width, height)
    }

    pub fn resize(&self, width: usize, height: usize) -> Self {
        self.resample_from(self, width, height)
    }

    fn resample_from(&self, src: &Self, width: usize, height: usize) -> Self {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut out = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                out.data[y * width + x] = src.sample((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5);
            }
        }
        out
    }
}

/// Normalised Gaussian taps on `-radius..=radius`.
pub(crate) fn gaussian_taps(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let raw: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_gradients() {
        let w = 16;
        let f = IntensityFrame::from_fn(w, 10, |x, _| x as f32 / w as f32).unwrap();
        let g = image_gradients(&f, &f).unwrap();
        for y in 0..10 {
            for x in 0..w {
                let (fx, fy, ft) = g.at(x, y);
                assert!((fx - 1.0 / w as f32).abs() < 1e-6, "{x},{y}: {fx}");
                assert_eq!((fy, ft), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn rejects_bad_frames() {
        assert!(IntensityFrame::new(2, 2, vec![0.0; 3]).is_err());
        assert!(IntensityFrame::new(1, 1, vec![f32::NAN]).is_err());
        let a = IntensityFrame::new(2, 2, vec![0.0; 4]).unwrap();
        let b = IntensityFrame::new(4, 1, vec![0.0; 4]).unwrap();
        assert!(matches!(image_gradients(&a, &b), Err(FlowError::ExtentMismatch { .. })));
    }

    #[test]
    fn luma_weights() {
        let img = Tensor::new(&[3, 1, 1], vec![1.0, 0.0, 0.0]).unwrap();
        assert!((IntensityFrame::from_rgb(&img).unwrap().at(0, 0) - 0.299).abs() < 1e-7);
    }

    #[test]
    fn box_mean_matches_direct_sum() {
        let p = Plane {
            width: 7,
            height: 5,
            data: (0..35).map(|i| ((i * 37) % 11) as f64).collect(),
        };
        let b = p.box_mean(3);
        for y in 0..5isize {
            for x in 0..7isize {
                let direct: f64 = (-1..=1).flat_map(|dy| (-1..=1).map(move |dx| (dx, dy))).map(|(dx, dy)| p.clamped(x + dx, y + dy)).sum::<f64>() / 9.0;
                assert!((b.data[(y * 7 + x) as usize] - direct).abs() < 1e-12);
            }
        }
    }
}
