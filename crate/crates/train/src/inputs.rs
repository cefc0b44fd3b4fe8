//! Per-stream network inputs built from a clip: rgb as is, depth from the
//! generator (or the sensor channel), motion images from dense flow.

use rayon::prelude::*;
use rc3d_core::models::{StreamConfig, StreamKind, StreamVars, UNetGenerator};
use rc3d_core::{Graph, Tensor};
use rc3d_data::Clip;
use rc3d_flow::{motion_image, FarnebackParams};

use crate::error::{config, Result};

/// Where the depth stream's frames come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DepthSource {
    /// Generator predictions from the rgb frames.
    #[default]
    Generated,
    /// The rendered depth channel, standing in for a depth camera.
    Sensor,
}

impl DepthSource {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "generated" => Ok(Self::Generated),
            "sensor" => Ok(Self::Sensor),
            other => Err(config(format!("unknown depth source {other:?} (expected generated or sensor)"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Generated => "generated",
            Self::Sensor => "sensor",
        }
    }
}

/// `[C,T,H,W]` tensors for each enabled stream of one clip.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipInputs {
    pub label: usize,
    pub streams: Vec<(StreamKind, Tensor<f32>)>,
}

#[derive(Clone, Copy)]
pub struct StreamInputs<'a> {
    pub streams: &'a StreamConfig,
    pub depth: DepthSource,
    pub flow: FarnebackParams,
    generator: Option<&'a UNetGenerator<f32>>,
}

impl<'a> StreamInputs<'a> {
    pub fn new(streams: &'a StreamConfig) -> Self {
        Self {
            streams,
            depth: DepthSource::default(),
            flow: FarnebackParams::default(),
            generator: None,
        }
    }

    pub fn with_generator(mut self, generator: &'a UNetGenerator<f32>) -> Self {
        self.generator = Some(generator);
        self
    }

    pub fn with_depth_source(mut self, depth: DepthSource) -> Self {
        self.depth = depth;
        self
    }

    /// Generated depth cannot be produced without a generator.
    pub fn check(&self) -> Result<()> {
        if self.streams.has(StreamKind::Gdepth) && self.depth == DepthSource::Generated && self.generator.is_none() {
            return Err(config("the gdepth stream needs a generator checkpoint"));
        }
        Ok(())
    }

    pub fn clip(&self, clip: &Clip) -> Result<ClipInputs> {
        let mut streams = Vec::with_capacity(self.streams.streams().len());
        for &kind in self.streams.streams() {
            let t = match kind {
                StreamKind::Rgb => Clip::channels_first(&clip.rgb),
                StreamKind::Gdepth => Clip::channels_first(&self.depth_frames(clip)?),
                StreamKind::Motion => {
                    let frames = self
                        .streams
                        .motion
                        .pairs(clip.rgb.shape()[0])
                        .into_iter()
                        .map(|(a, b)| motion_image(&clip.rgb_frame(a), &clip.rgb_frame(b), &self.flow))
                        .collect::<std::result::Result<Vec<_>, _>>()?;
                    Clip::channels_first(&stack(&frames)?)
                }
            };
            streams.push((kind, t));
        }
        Ok(ClipInputs { label: clip.label, streams })
    }

    fn depth_frames(&self, clip: &Clip) -> Result<Tensor<f32>> {
        match self.depth {
            DepthSource::Sensor => Ok(clip.depth.clone()),
            DepthSource::Generated => {
                let g = self.generator.ok_or_else(|| config("the gdepth stream needs a generator checkpoint"))?;
                Ok(g.predict(&clip.rgb)?)
            }
        }
    }

    /// Inputs for every clip; clips are independent, so they are built in parallel.
    pub fn prepare(&self, clips: &[Clip]) -> Result<Vec<ClipInputs>> {
        self.check()?;
        clips.par_iter().map(|c| self.clip(c)).collect()
    }
}

fn stack(frames: &[Tensor<f32>]) -> Result<Tensor<f32>> {
    let first = frames.first().ok_or_else(|| config("no frames to stack"))?;
    let mut shape = vec![frames.len()];
    shape.extend_from_slice(first.shape());
    Ok(Tensor::new(&shape, frames.iter().flat_map(|f| f.data().iter().copied()).collect())?)
}

/// Stacks a batch into one `[N,C,T,H,W]` tensor per stream.
pub fn collate(batch: &[&ClipInputs]) -> Result<Vec<(StreamKind, Tensor<f32>)>> {
    let first = batch.first().ok_or_else(|| config("empty batch"))?;
    first
        .streams
        .iter()
        .enumerate()
        .map(|(i, (kind, _))| {
            let items = batch
                .iter()
                .map(|b| match b.streams.get(i) {
                    Some((k, t)) if k == kind => Ok(t.clone()),
                    _ => Err(config("batch items carry different streams")),
                })
                .collect::<Result<Vec<_>>>()?;
            if items.iter().any(|t| t.shape() != items[0].shape()) {
                return Err(config(format!("{kind} inputs differ in shape within a batch")));
            }
            Ok((*kind, stack(&items)?))
        })
        .collect()
}

/// Adds collated tensors to `g` as constants.
pub fn bind(g: &mut Graph<'_, f32>, batch: Vec<(StreamKind, Tensor<f32>)>) -> StreamVars {
    let mut vars = StreamVars::default();
    for (kind, t) in batch {
        let v = g.constant(t);
        vars.set(kind, v);
    }
    vars
}

#[cfg(test)]
mod tests {
    use super::*;
    use rc3d_core::models::{build_unet_generator, ModelOptions, ScaleProfile};
    use rc3d_data::{generate_sample, segment_three_frames, Preprocess, SceneSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn clip(label: usize) -> Clip {
        let mut rng = ChaCha8Rng::seed_from_u64(label as u64);
        let spec = SceneSpec::sample(label, 48, 0.0, &mut rng).unwrap();
        segment_three_frames(&generate_sample(&spec, 9).unwrap())
            .unwrap()
            .preprocess(&Preprocess::new(32))
            .unwrap()
    }

    #[test]
    fn stream_shapes() {
        let all = StreamConfig::new(&StreamKind::ALL).unwrap();
        let gen = build_unet_generator::<f32>(&ScaleProfile::toy(), &ModelOptions::with_seed(1)).unwrap();
        let inputs = StreamInputs::new(&all).with_generator(&gen).clip(&clip(3)).unwrap();
        let shapes: Vec<_> = inputs.streams.iter().map(|(k, t)| (*k, t.shape().to_vec())).collect();
        assert_eq!(
            shapes,
            vec![
                (StreamKind::Rgb, vec![3, 3, 32, 32]),
                (StreamKind::Gdepth, vec![1, 3, 32, 32]),
                (StreamKind::Motion, vec![3, 1, 32, 32]),
            ]
        );
        let c = collate(&[&inputs, &inputs]).unwrap();
        assert_eq!(c[2].1.shape(), &[2, 3, 1, 32, 32]);
    }

    #[test]
    fn generated_depth_requires_a_generator() {
        let s = StreamConfig::new(&[StreamKind::Rgb, StreamKind::Gdepth]).unwrap();
        assert!(StreamInputs::new(&s).check().is_err());
        let c = clip(0);
        let sensor = StreamInputs::new(&s).with_depth_source(DepthSource::Sensor).clip(&c).unwrap();
        assert_eq!(sensor.streams[1].1, Clip::channels_first(&c.depth));
    }
}
