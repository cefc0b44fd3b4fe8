//! Three-frame clips and the per-frame preprocessing and augmentation.

use rand::Rng;
use rc3d_core::Tensor;

use crate::error::{DataError, Result};
use crate::filters::{edge_enhance, gaussian_noise, lanczos_resize, rotate, rotation_angle};
use crate::scene::GestureVideo;

pub const CLIP_FRAMES: usize = 3;

/// Frames `0`, `floor((T-1)/2)` and `T-1`.
pub fn frame_indices(frames: usize) -> Result<[usize; CLIP_FRAMES]> {
    if frames == 0 {
        return Err(DataError::Invalid("cannot segment an empty video".into()));
    }
    Ok([0, (frames - 1) / 2, frames - 1])
}

/// A labelled clip; `rgb` is `[3,3,H,W]` and `depth` `[3,1,H,W]`, frame-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub rgb: Tensor<f32>,
    pub depth: Tensor<f32>,
    pub label: usize,
    pub indices: [usize; CLIP_FRAMES],
}

fn frames(t: &Tensor<f32>) -> Vec<Tensor<f32>> {
    let s = t.shape();
    let per: usize = s[1..].iter().product();
    t.data().chunks(per).map(|c| Tensor::new(&s[1..], c.to_vec()).expect("chunk shape")).collect()
}

fn stack(frames: &[Tensor<f32>]) -> Result<Tensor<f32>> {
    let mut shape = vec![frames.len()];
    shape.extend_from_slice(frames[0].shape());
    Ok(Tensor::new(&shape, frames.iter().flat_map(|f| f.data().iter().copied()).collect())?)
}

fn map_frames(t: &Tensor<f32>, mut f: impl FnMut(&Tensor<f32>) -> Result<Tensor<f32>>) -> Result<Tensor<f32>> {
    let out = frames(t).iter().map(&mut f).collect::<Result<Vec<_>>>()?;
    stack(&out)
}

pub fn segment_three_frames(video: &GestureVideo) -> Result<Clip> {
    let indices = frame_indices(video.frames())?;
    let pick = |t: &Tensor<f32>| {
        let all = frames(t);
        stack(&indices.map(|i| all[i].clone()))
    };
    Ok(Clip {
        rgb: pick(&video.rgb)?,
        depth: pick(&video.depth)?,
        label: video.label,
        indices,
    })
}

/// Deterministic per-frame preparation applied to every split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preprocess {
    pub extent: usize,
    pub lanczos_a: usize,
    pub edge_enhance: bool,
}

impl Preprocess {
    pub fn new(extent: usize) -> Self {
        Self {
            extent,
            lanczos_a: 3,
            edge_enhance: true,
        }
    }
}

/// Training-only augmentation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Augment {
    pub rotate: bool,
    pub noise_sigma: f64,
}

impl Default for Augment {
    fn default() -> Self {
        Self { rotate: true, noise_sigma: 0.03 }
    }
}

impl Clip {
    pub fn extent(&self) -> usize {
        self.rgb.shape()[2]
    }

    /// Lanczos resize of rgb and depth, then edge enhancement of rgb.
    pub fn preprocess(&self, p: &Preprocess) -> Result<Clip> {
        let out = (p.extent, p.extent);
        let rgb = map_frames(&self.rgb, |f| {
            let r = lanczos_resize(f, out, p.lanczos_a)?;
            if p.edge_enhance {
                edge_enhance(&r)
            } else {
                Ok(r)
            }
        })?;
        let depth = map_frames(&self.depth, |f| lanczos_resize(f, out, p.lanczos_a))?;
        Ok(Clip { rgb, depth, ..self.clone() })
    }

    /// One rotation angle for the whole clip, depth included; noise on rgb only.
    pub fn augment(&self, a: &Augment, rng: &mut impl Rng) -> Result<Clip> {
        let deg = if a.rotate { rotation_angle(rng) } else { 0.0 };
        let rgb = map_frames(&self.rgb, |f| gaussian_noise(&rotate(f, deg)?, a.noise_sigma, rng))?;
        let depth = map_frames(&self.depth, |f| rotate(f, deg))?;
        Ok(Clip { rgb, depth, ..self.clone() })
    }

    /// `[T,C,H,W]` frames as the `[C,T,H,W]` layout networks consume.
    pub fn channels_first(t: &Tensor<f32>) -> Tensor<f32> {
        let s = t.shape();
        let (tn, c, hw) = (s[0], s[1], s[2] * s[3]);
        let d = t.data();
        let mut out = Vec::with_capacity(d.len());
        for ci in 0..c {
            for ti in 0..tn {
                out.extend_from_slice(&d[(ti * c + ci) * hw..(ti * c + ci + 1) * hw]);
            }
        }
        Tensor::new(&[c, tn, s[2], s[3]], out).expect("same element count")
    }

    /// Frame `t` of `rgb` as a `[3,H,W]` image.
    pub fn rgb_frame(&self, t: usize) -> Tensor<f32> {
        frames(&self.rgb).swap_remove(t)
    }

    pub fn depth_frame(&self, t: usize) -> Tensor<f32> {
        frames(&self.depth).swap_remove(t)
    }
}
