//! Dropout, sub-pixel shuffle, replication padding and interpolation.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::graph::{Graph, Var};
use crate::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterpMode {
    Nearest,
    Bilinear,
}

/// Channel keep-mask for `n_channels` channels: each is dropped with
/// probability `p`; survivors carry the scale `1 / (1 - p)`.
pub fn dropout_mask<T: Scalar>(n_channels: usize, p: f64, rng: &mut impl Rng) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - p));
    (0..n_channels)
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect()
}

fn dims4(op: &str, s: &[usize]) -> Result<[usize; 4]> {
    match s {
        &[n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(invalid(format!("{op}: expected rank 4 [N,C,H,W], got {s:?}"))),
    }
}

impl<T: Scalar> Graph<'_, T> {
    /// Whole-channel dropout. Identity in eval mode or when `p == 0`.
    pub fn dropout2d(&mut self, x: Var, p: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(invalid(format!("dropout probability must lie in [0, 1), got {p}")));
        }
        let shape = self.shape(x).to_vec();
        if shape.len() < 3 {
            return Err(invalid(format!("dropout2d: expected [N,C,...], got {shape:?}")));
        }
        if p == 0.0 {
            return Ok(x);
        }
        let Some(rng) = self.rng_mut() else {
            return Ok(x);
        };
        let channels = shape[0] * shape[1];
        let mask: Vec<T> = dropout_mask(channels, p, rng);
        let inner: usize = shape[2..].iter().product();
        let mut out = self.value(x).data().to_vec();
        for (chunk, &m) in out.chunks_mut(inner).zip(&mask) {
            chunk.iter_mut().for_each(|v| *v *= m);
        }
        let out = Tensor::new(&shape, out)?;
        Ok(self.record("dropout2d", out, &[x], move |ctx| {
            let mut dx = ctx.grad.to_vec();
            for (chunk, &m) in dx.chunks_mut(inner).zip(&mask) {
                chunk.iter_mut().for_each(|v| *v *= m);
            }
            vec![Some(dx)]
        }))
    }

    /// `[N, C r^2, H, W] -> [N, C, rH, rW]` with
    /// `out[n, c, h r + i, w r + j] = in[n, c r^2 + i r + j, h, w]`.
    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let [n, cr, h, w] = dims4("pixel_shuffle", self.shape(x))?;
        if r == 0 || cr % (r * r) != 0 {
            return Err(invalid(format!("pixel_shuffle: {cr} channels not divisible by r^2 = {}", r * r)));
        }
        let c = cr / (r * r);
        let (oh, ow) = (h * r, w * r);
        // perm[dst] = src
        let mut perm = vec![0usize; n * cr * h * w];
        for b in 0..n {
            for ch in 0..c {
                for y in 0..oh {
                    for xx in 0..ow {
                        let (hi, i) = (y / r, y % r);
                        let (wi, j) = (xx / r, xx % r);
                        let src = ((b * cr + ch * r * r + i * r + j) * h + hi) * w + wi;
                        let dst = ((b * c + ch) * oh + y) * ow + xx;
                        perm[dst] = src;
                    }
                }
            }
        }
        let xd = self.value(x).data();
        let out = Tensor::new(&[n, c, oh, ow], perm.iter().map(|&s| xd[s]).collect())?;
        Ok(self.record("pixel_shuffle", out, &[x], move |ctx| {
            let mut dx = vec![T::zero(); perm.len()];
            for (&s, &g) in perm.iter().zip(ctx.grad) {
                dx[s] = g;
            }
            vec![Some(dx)]
        }))
    }

    /// Replication padding of the trailing `pads.len()` axes; `pads[i]` is
    /// `(before, after)`.
    pub fn pad_replicate(&mut self, x: Var, pads: &[(usize, usize)]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if pads.len() > shape.len() {
            return Err(invalid(format!("pad_replicate: {} pads for rank {}", pads.len(), shape.len())));
        }
        let lead = shape.len() - pads.len();
        let mut out_shape = shape.clone();
        for (i, &(a, b)) in pads.iter().enumerate() {
            out_shape[lead + i] += a + b;
        }
        let in_strides = self.value(x).strides();
        let total: usize = out_shape.iter().product();
        let mut src = Vec::with_capacity(total);
        let mut idx = vec![0usize; out_shape.len()];
        for _ in 0..total {
            let mut off = 0;
            for (ax, &i) in idx.iter().enumerate() {
                let s = if ax >= lead {
                    let before = pads[ax - lead].0;
                    i.saturating_sub(before).min(shape[ax] - 1)
                } else {
                    i
                };
                off += s * in_strides[ax];
            }
            src.push(off);
            for ax in (0..idx.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < out_shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        let xd = self.value(x).data();
        let in_len = xd.len();
        let out = Tensor::new(&out_shape, src.iter().map(|&s| xd[s]).collect())?;
        Ok(self.record("pad_replicate", out, &[x], move |ctx| {
            let mut dx = vec![T::zero(); in_len];
            for (&s, &g) in src.iter().zip(ctx.grad) {
                dx[s] += g;
            }
            vec![Some(dx)]
        }))
    }

    /// Resizes `[N,C,H,W]` to `out` spatial extents. Nearest uses source
    /// index `floor((i + 0.5) H / H')`; bilinear uses half-pixel centres
    /// (corners not aligned).
    pub fn interpolate(&mut self, x: Var, out: (usize, usize), mode: InterpMode) -> Result<Var> {
        let [n, c, h, w] = dims4("interpolate", self.shape(x))?;
        let (oh, ow) = out;
        if oh == 0 || ow == 0 {
            return Err(invalid("interpolate: output extents must be positive"));
        }
        let taps_h = axis_taps(h, oh, mode);
        let taps_w = axis_taps(w, ow, mode);
        let xd = self.value(x).data();
        let mut data = vec![T::zero(); n * c * oh * ow];
        for (plane, dst) in data.chunks_mut(oh * ow).enumerate() {
            let src = &xd[plane * h * w..(plane + 1) * h * w];
            for (i, th) in taps_h.iter().enumerate() {
                for (j, tw) in taps_w.iter().enumerate() {
                    let mut acc = T::zero();
                    for &(a, wa) in th {
                        for &(b, wb) in tw {
                            acc += src[a * w + b] * T::of(wa * wb);
                        }
                    }
                    dst[i * ow + j] = acc;
                }
            }
        }
        let out_t = Tensor::new(&[n, c, oh, ow], data)?;
        Ok(self.record("interpolate", out_t, &[x], move |ctx| {
            let mut dx = vec![T::zero(); n * c * h * w];
            for (plane, g) in ctx.grad.chunks(oh * ow).enumerate() {
                let d = &mut dx[plane * h * w..(plane + 1) * h * w];
                for (i, th) in taps_h.iter().enumerate() {
                    for (j, tw) in taps_w.iter().enumerate() {
                        let gv = g[i * ow + j];
                        for &(a, wa) in th {
                            for &(b, wb) in tw {
                                d[a * w + b] += gv * T::of(wa * wb);
                            }
                        }
                    }
                }
            }
            vec![Some(dx)]
        }))
    }
}

/// Source taps `(index, weight)` for each output position along one axis.
fn axis_taps(len: usize, out: usize, mode: InterpMode) -> Vec<Vec<(usize, f64)>> {
    let scale = len as f64 / out as f64;
    (0..out)
        .map(|i| match mode {
            InterpMode::Nearest => {
                let s = (((i as f64 + 0.5) * scale).floor() as usize).min(len - 1);
                vec![(s, 1.0)]
            }
            InterpMode::Bilinear => {
                let s = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
                let i0 = (s.floor() as usize).min(len - 1);
                let i1 = (i0 + 1).min(len - 1);
                let frac = s - i0 as f64;
                if i0 == i1 || frac == 0.0 {
                    vec![(i0, 1.0)]
                } else {
                    vec![(i0, 1.0 - frac), (i1, frac)]
                }
            }
        })
        .collect()
}
