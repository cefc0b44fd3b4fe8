//! Multi-stream rC3D: one backbone per input modality, fused by a shared head.

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, Var};
use crate::param::ParamStore;
use crate::Scalar;

use super::network::{check_input, rc3d_backbone, rc3d_head, Builder, ModelOptions, NamedStage, Network};
use super::profile::ScaleProfile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StreamKind {
    Rgb,
    Gdepth,
    Motion,
}

impl StreamKind {
    pub const ALL: [StreamKind; 3] = [StreamKind::Rgb, StreamKind::Gdepth, StreamKind::Motion];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Rgb => "rgb",
            Self::Gdepth => "gdepth",
            Self::Motion => "motion",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "rgb" => Ok(Self::Rgb),
            "gdepth" => Ok(Self::Gdepth),
            "motion" => Ok(Self::Motion),
            other => Err(invalid(format!("unknown stream {other:?} (expected rgb, gdepth or motion)"))),
        }
    }

    pub fn channels(&self) -> usize {
        match self {
            Self::Gdepth => 1,
            _ => 3,
        }
    }
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which frame pairs feed the flow computation of the motion stream.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MotionPairing {
    /// One flow image between the first and last frame.
    #[default]
    Span,
    /// One flow image per adjacent pair.
    Adjacent,
}

impl MotionPairing {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "span" => Ok(Self::Span),
            "adjacent" => Ok(Self::Adjacent),
            other => Err(invalid(format!("unknown motion pairing {other:?} (expected span or adjacent)"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Span => "span",
            Self::Adjacent => "adjacent",
        }
    }

    /// Index pairs into a clip of `frames` frames.
    pub fn pairs(&self, frames: usize) -> Vec<(usize, usize)> {
        match self {
            Self::Span => vec![(0, frames.saturating_sub(1))],
            Self::Adjacent => (1..frames).map(|i| (i - 1, i)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StreamConfig {
    streams: Vec<StreamKind>,
    pub motion: MotionPairing,
}

impl StreamConfig {
    /// Streams are kept in canonical rgb, gdepth, motion order.
    pub fn new(streams: &[StreamKind]) -> Result<Self> {
        let mut s = streams.to_vec();
        s.sort();
        s.dedup();
        if s.is_empty() {
            return Err(Error::Config("at least one stream must be enabled".into()));
        }
        Ok(Self {
            streams: s,
            motion: MotionPairing::Span,
        })
    }

    pub fn parse(list: &str) -> Result<Self> {
        let kinds = list.split(',').filter(|s| !s.trim().is_empty()).map(StreamKind::parse).collect::<Result<Vec<_>>>()?;
        Self::new(&kinds)
    }

    pub fn with_motion(mut self, motion: MotionPairing) -> Self {
        self.motion = motion;
        self
    }

    pub fn streams(&self) -> &[StreamKind] {
        &self.streams
    }

    pub fn has(&self, s: StreamKind) -> bool {
        self.streams.contains(&s)
    }

    pub fn list(&self) -> String {
        self.streams.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(",")
    }

    /// Frames each stream sees for a clip of `frames` frames.
    pub fn frames(&self, s: StreamKind, frames: usize) -> usize {
        match s {
            StreamKind::Motion => self.motion.pairs(frames).len(),
            _ => frames,
        }
    }
}

/// Per-stream graph inputs; absent streams are `None`.
#[derive(Clone, Copy, Debug, Default)]
pub struct StreamVars {
    pub rgb: Option<Var>,
    pub gdepth: Option<Var>,
    pub motion: Option<Var>,
}

impl StreamVars {
    pub fn rgb(x: Var) -> Self {
        Self { rgb: Some(x), ..Self::default() }
    }

    pub fn get(&self, s: StreamKind) -> Option<Var> {
        match s {
            StreamKind::Rgb => self.rgb,
            StreamKind::Gdepth => self.gdepth,
            StreamKind::Motion => self.motion,
        }
    }

    pub fn set(&mut self, s: StreamKind, v: Var) {
        match s {
            StreamKind::Rgb => self.rgb = Some(v),
            StreamKind::Gdepth => self.gdepth = Some(v),
            StreamKind::Motion => self.motion = Some(v),
        }
    }
}

/// Anything mapping stream inputs to class logits.
pub trait Classifier<T: Scalar> {
    fn store(&self) -> &ParamStore<T>;
    fn store_mut(&mut self) -> &mut ParamStore<T>;
    fn streams(&self) -> StreamConfig;
    fn forward(&self, g: &mut Graph<'_, T>, inputs: &StreamVars) -> Result<Var>;
}

impl<T: Scalar> Classifier<T> for Network<T> {
    fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn streams(&self) -> StreamConfig {
        StreamConfig::new(&[StreamKind::Rgb]).expect("non-empty")
    }

    fn forward(&self, g: &mut Graph<'_, T>, inputs: &StreamVars) -> Result<Var> {
        let x = inputs.rgb.ok_or_else(|| Error::Config("rgb input missing".into()))?;
        Network::forward(self, g, x)
    }
}

#[derive(Clone, Debug)]
pub struct StreamPath {
    pub kind: StreamKind,
    pub input: [usize; 4],
    pub stages: Vec<NamedStage>,
}

/// rC3D backbones per stream, stack-pooled separately, concatenated and
/// fed to one head. Pooling each stream before concatenation is what lets
/// the motion stream have a different temporal extent.
#[derive(Clone, Debug)]
pub struct MultiStreamNet<T: Scalar> {
    pub config: StreamConfig,
    pub store: ParamStore<T>,
    pub paths: Vec<StreamPath>,
    pub head: Vec<NamedStage>,
    pub class_count: usize,
}

impl<T: Scalar> MultiStreamNet<T> {
    pub fn build(profile: &ScaleProfile, config: &StreamConfig, opts: &ModelOptions) -> Result<Self> {
        profile.validate()?;
        let mut store = ParamStore::new();
        let mut paths = Vec::new();
        let mut fused = 0;
        for &kind in config.streams() {
            let input = [kind.channels(), config.frames(kind, profile.frames), profile.input_extent, profile.input_extent];
            let mut b = Builder::new(&mut store, opts, [&[1][..], &input[..]].concat());
            rc3d_backbone(&mut b, kind.as_str(), profile)?;
            fused += b.shape[1];
            paths.push(StreamPath { kind, input, stages: b.stages });
        }
        let head = {
            let mut b = Builder::new(&mut store, opts, vec![1, fused, 1, 1, 1]);
            rc3d_head(&mut b, profile, opts)?;
            b.stages
        };
        Ok(Self {
            config: config.clone(),
            store,
            paths,
            head,
            class_count: opts.class_count,
        })
    }

    /// Width of the fused feature entering the head.
    pub fn fused_width(&self) -> usize {
        self.paths.iter().map(|p| p.stages.last().map_or(0, |s| s.output[1])).sum()
    }

    pub fn param_count(&self) -> usize {
        self.store.scalar_count()
    }

    /// Logits from per-stream inputs; the graph precision may differ from `T`.
    pub fn fuse<U: Scalar>(&self, g: &mut Graph<'_, U>, inputs: &StreamVars) -> Result<Var> {
        let mut pooled = Vec::with_capacity(self.paths.len());
        for p in &self.paths {
            let x = inputs.get(p.kind).ok_or_else(|| Error::Config(format!("{} stream enabled but no input given", p.kind)))?;
            check_input(g.shape(x), &p.input)?;
            let mut h = x;
            for s in &p.stages {
                h = s.stage.forward(g, h)?;
            }
            pooled.push(h);
        }
        let mut h = if pooled.len() == 1 { pooled[0] } else { g.concat(&pooled, 1)? };
        for s in &self.head {
            h = s.stage.forward(g, h)?;
        }
        Ok(h)
    }
}

impl<T: Scalar> Classifier<T> for MultiStreamNet<T> {
    fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn streams(&self) -> StreamConfig {
        self.config.clone()
    }

    fn forward(&self, g: &mut Graph<'_, T>, inputs: &StreamVars) -> Result<Var> {
        self.fuse(g, inputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::build_rc3d;
    use crate::Tensor;

    fn clip(shape: &[usize], salt: usize) -> Tensor<f32> {
        Tensor::from_fn(shape, |i| (((i + salt) * 2654435761) % 1000) as f32 / 1000.0).unwrap()
    }

    #[test]
    fn rgb_only_equals_standalone_rc3d() {
        let p = ScaleProfile::toy();
        let opts = ModelOptions::with_seed(21);
        let single = build_rc3d::<f32>(&p, &opts).unwrap();
        let multi = MultiStreamNet::<f32>::build(&p, &StreamConfig::new(&[StreamKind::Rgb]).unwrap(), &opts).unwrap();
        assert_eq!(single.param_count(), multi.param_count());
        let x = clip(&[2, 3, 3, 32, 32], 0);
        let a = single.logits(&x).unwrap();
        let mut g = Graph::new(&multi.store);
        let v = g.input(x);
        let y = multi.forward(&mut g, &StreamVars::rgb(v)).unwrap();
        assert_eq!(a.data(), g.value(y).data());
    }

    #[test]
    fn three_streams_and_head_width_bookkeeping() {
        let p = ScaleProfile::toy();
        let opts = ModelOptions::default();
        let all = StreamConfig::new(&StreamKind::ALL).unwrap();
        let net = MultiStreamNet::<f32>::build(&p, &all, &opts).unwrap();
        let mut g = Graph::new(&net.store);
        let vars = StreamVars {
            rgb: Some(g.input(clip(&[2, 3, 3, 32, 32], 1))),
            gdepth: Some(g.input(clip(&[2, 1, 3, 32, 32], 2))),
            motion: Some(g.input(clip(&[2, 3, 1, 32, 32], 3))),
        };
        let y = net.forward(&mut g, &vars).unwrap();
        assert_eq!(g.shape(y), &[2, 16]);
        let last = 2 * p.stages.last().unwrap().last().unwrap();
        for drop in StreamKind::ALL {
            let rest: Vec<_> = StreamKind::ALL.into_iter().filter(|&s| s != drop).collect();
            let fewer = MultiStreamNet::<f32>::build(&p, &StreamConfig::new(&rest).unwrap(), &opts).unwrap();
            assert_eq!(net.fused_width() - fewer.fused_width(), last);
        }
    }

    #[test]
    fn config_rules() {
        assert!(matches!(StreamConfig::new(&[]), Err(Error::Config(_))));
        let c = StreamConfig::parse("motion,rgb,rgb").unwrap();
        assert_eq!(c.list(), "rgb,motion");
        assert_eq!(MotionPairing::Adjacent.pairs(3), vec![(0, 1), (1, 2)]);
        assert_eq!(MotionPairing::Span.pairs(3), vec![(0, 2)]);
    }
}
