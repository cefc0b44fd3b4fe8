//! Sequential video classifiers: C3D, P3D-A and rC3D.

use std::fmt;

use crate::blocks::{stack_pool, Conv3dLayer, LinearLayer, P3dBlockA, Rc3dBlock, ResidualConfig};
use crate::error::{invalid, mismatch, Error, Result};
use crate::graph::{Graph, Var};
use crate::init::Initializer;
use crate::ops::{Activation, ConvSpec, PoolMode, PoolSpec};
use crate::param::ParamStore;
use crate::{Scalar, Tensor};

use super::profile::ScaleProfile;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    C3d,
    P3da,
    Rc3d,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "c3d" => Ok(Self::C3d),
            "p3da" => Ok(Self::P3da),
            "rc3d" => Ok(Self::Rc3d),
            other => Err(invalid(format!("unknown model kind {other:?} (expected c3d, p3da or rc3d)"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::C3d => "c3d",
            Self::P3da => "p3da",
            Self::Rc3d => "rc3d",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Settings every builder shares besides the profile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelOptions {
    pub seed: u64,
    pub act: Activation,
    pub class_count: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            act: Activation::default(),
            class_count: 16,
        }
    }
}

impl ModelOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn initializer(&self) -> Initializer {
        Initializer::new(self.seed, self.act.slope)
    }
}

#[derive(Clone, Debug)]
pub enum Stage {
    Conv(Conv3dLayer, Activation),
    P3d(P3dBlockA),
    Rc3d(Rc3dBlock),
    Pool(PoolSpec),
    StackPool,
    Flatten,
    Linear(LinearLayer, Option<Activation>),
}

impl Stage {
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        match self {
            Stage::Conv(l, act) => {
                let y = l.forward(g, x)?;
                Ok(g.shifted_leaky_relu(y, *act))
            }
            Stage::P3d(b) => b.forward(g, x),
            Stage::Rc3d(b) => b.forward(g, x),
            Stage::Pool(spec) => g.pool3d(x, spec),
            Stage::StackPool => stack_pool(g, x),
            Stage::Flatten => g.flatten(x),
            Stage::Linear(l, act) => {
                let y = l.forward(g, x)?;
                Ok(match act {
                    Some(a) => g.shifted_leaky_relu(y, *a),
                    None => y,
                })
            }
        }
    }

    /// Output shape for `input`, without running anything.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let five = |s: &[usize]| -> Result<[usize; 5]> {
            match s {
                &[n, c, t, h, w] => Ok([n, c, t, h, w]),
                _ => Err(invalid(format!("expected [N,C,T,H,W], got {s:?}"))),
            }
        };
        match self {
            Stage::Conv(l, _) => {
                let [n, c, t, h, w] = five(input)?;
                if c != l.spec.in_channels {
                    return Err(mismatch("conv3d", "input axis 1", l.spec.in_channels, c));
                }
                let (t, h, w) = l.spec.output_extents((t, h, w))?;
                Ok(vec![n, l.spec.out_channels, t, h, w])
            }
            Stage::P3d(b) => b.output_shape(input),
            Stage::Rc3d(b) => b.output_shape(input),
            Stage::Pool(spec) => {
                let [n, c, t, h, w] = five(input)?;
                let (t, h, w) = spec.output_extents((t, h, w))?;
                Ok(vec![n, c, t, h, w])
            }
            Stage::StackPool => {
                let [n, c, ..] = five(input)?;
                Ok(vec![n, 2 * c, 1, 1, 1])
            }
            Stage::Flatten => Ok(vec![input[0], input[1..].iter().product()]),
            Stage::Linear(l, _) => match input {
                &[n, f] if f == l.in_features => Ok(vec![n, l.out_features]),
                _ => Err(invalid(format!("linear expects [N,{}], got {input:?}", l.in_features))),
            },
        }
    }

    /// Zeroes the terminal conv of a residual branch; other stages are left alone.
    pub fn zero_branch_terminal<T: Scalar>(&self, store: &mut ParamStore<T>) {
        match self {
            Stage::P3d(b) => b.zero_branch_terminal(store),
            Stage::Rc3d(b) => b.zero_branch_terminal(store),
            _ => {}
        }
    }
}

#[derive(Clone, Debug)]
pub struct NamedStage {
    pub name: String,
    pub stage: Stage,
    /// Output shape for a batch of one.
    pub output: Vec<usize>,
}

/// Appends stages to a parameter store while tracking the running shape.
pub(crate) struct Builder<'a, T: Scalar> {
    pub store: &'a mut ParamStore<T>,
    pub init: Initializer,
    pub act: Activation,
    pub stages: Vec<NamedStage>,
    pub shape: Vec<usize>,
}

impl<'a, T: Scalar> Builder<'a, T> {
    pub fn new(store: &'a mut ParamStore<T>, opts: &ModelOptions, input: Vec<usize>) -> Self {
        Self {
            store,
            init: opts.initializer(),
            act: opts.act,
            stages: Vec::new(),
            shape: input,
        }
    }

    fn push(&mut self, name: String, stage: Stage) -> Result<()> {
        let output = stage.output_shape(&self.shape).map_err(|e| invalid(format!("stage {name}: {}", strip(e))))?;
        self.shape = output.clone();
        self.stages.push(NamedStage { name, stage, output });
        Ok(())
    }

    fn channels(&self) -> usize {
        self.shape[1]
    }

    fn wrap<R>(name: &str, r: Result<R>) -> Result<R> {
        r.map_err(|e| invalid(format!("stage {name}: {}", strip(e))))
    }

    pub fn conv(&mut self, name: String, width: usize) -> Result<()> {
        let spec = ConvSpec::same(self.channels(), width, (3, 3, 3));
        let layer = Self::wrap(&name, Conv3dLayer::new(self.store, &self.init, &name, spec))?;
        self.push(name, Stage::Conv(layer, self.act))
    }

    pub fn p3d(&mut self, name: String, width: usize) -> Result<()> {
        let cfg = ResidualConfig::new(self.channels(), width).with_act(self.act);
        let block = Self::wrap(&name, P3dBlockA::new(self.store, &self.init, &name, cfg))?;
        self.push(name, Stage::P3d(block))
    }

    pub fn rc3d(&mut self, name: String, width: usize, pool: bool) -> Result<()> {
        let cfg = ResidualConfig::new(self.channels(), width).with_act(self.act);
        let block = Self::wrap(&name, Rc3dBlock::new(self.store, &self.init, &name, cfg, pool))?;
        self.push(name, Stage::Rc3d(block))
    }

    /// C3D pooling: spatial-only for the first stage, then 2x2x2 with the
    /// temporal window clamped to the remaining extent.
    pub fn c3d_pool(&mut self, name: String, first: bool) -> Result<()> {
        let t = self.shape[2];
        let tw = if first { 1 } else { t.clamp(1, 2) };
        self.push(name, Stage::Pool(PoolSpec::new(PoolMode::Max, (tw, 2, 2))))
    }

    pub fn stack_pool(&mut self, name: String) -> Result<()> {
        self.push(name, Stage::StackPool)
    }

    pub fn flatten(&mut self, name: String) -> Result<()> {
        self.push(name, Stage::Flatten)
    }

    pub fn linear(&mut self, name: String, out: usize, act: bool) -> Result<()> {
        let f = self.shape[1];
        let layer = Self::wrap(&name, LinearLayer::new(self.store, &self.init, &name, f, out))?;
        self.push(name, Stage::Linear(layer, act.then_some(self.act)))
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::InvalidArgument(m) | Error::Config(m) | Error::Internal(m) | Error::Format(m) => m,
        other => other.to_string(),
    }
}

/// A chain of stages over one input stream.
#[derive(Clone, Debug)]
pub struct Network<T: Scalar> {
    pub kind: ModelKind,
    pub store: ParamStore<T>,
    pub stages: Vec<NamedStage>,
    /// Expected `[C, T, H, W]` of one sample.
    pub input: [usize; 4],
    pub class_count: usize,
}

impl<T: Scalar> Network<T> {
    /// The graph may run in another precision, over a cast of `store`.
    pub fn forward<U: Scalar>(&self, g: &mut Graph<'_, U>, x: Var) -> Result<Var> {
        check_input(g.shape(x), &self.input)?;
        let mut h = x;
        for s in &self.stages {
            h = s.stage.forward(g, h)?;
        }
        Ok(h)
    }

    /// Eval-mode logits for a batch.
    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new(&self.store);
        let v = g.input(x.clone());
        let y = self.forward(&mut g, v)?;
        Ok(g.value(y).clone())
    }

    pub fn param_count(&self) -> usize {
        self.store.scalar_count()
    }

    pub fn zero_branch_terminals(&mut self) {
        for s in &self.stages {
            s.stage.zero_branch_terminal(&mut self.store);
        }
    }
}

pub(crate) fn check_input(shape: &[usize], want: &[usize; 4]) -> Result<()> {
    if shape.len() != 5 || shape[1..] != want[..] {
        return Err(invalid(format!("network expects input [N,{},{},{},{}], got {shape:?}", want[0], want[1], want[2], want[3])));
    }
    Ok(())
}

fn rgb_input(profile: &ScaleProfile) -> [usize; 4] {
    [3, profile.frames, profile.input_extent, profile.input_extent]
}

fn finish<T: Scalar>(kind: ModelKind, store: ParamStore<T>, stages: Vec<NamedStage>, input: [usize; 4], opts: &ModelOptions) -> Network<T> {
    Network {
        kind,
        store,
        stages,
        input,
        class_count: opts.class_count,
    }
}

fn plain_chain<T: Scalar>(kind: ModelKind, profile: &ScaleProfile, opts: &ModelOptions) -> Result<Network<T>> {
    profile.validate()?;
    let input = rgb_input(profile);
    let mut store = ParamStore::new();
    let stages = {
        let mut b = Builder::new(&mut store, opts, [&[1][..], &input[..]].concat());
        for (i, widths) in profile.stages.iter().enumerate() {
            for (j, &w) in widths.iter().enumerate() {
                match kind {
                    ModelKind::C3d => b.conv(format!("rgb.s{i}.conv{j}"), w)?,
                    _ => b.p3d(format!("rgb.s{i}.b{j}"), w)?,
                }
            }
            b.c3d_pool(format!("rgb.s{i}.pool"), i == 0)?;
        }
        b.flatten("head.flatten".into())?;
        b.linear("head.fc1".into(), profile.head_width, true)?;
        b.linear("head.fc2".into(), profile.head_width, true)?;
        b.linear("head.cls".into(), opts.class_count, false)?;
        b.stages
    };
    Ok(finish(kind, store, stages, input, opts))
}

pub fn build_c3d<T: Scalar>(profile: &ScaleProfile, opts: &ModelOptions) -> Result<Network<T>> {
    plain_chain(ModelKind::C3d, profile, opts)
}

pub fn build_p3da<T: Scalar>(profile: &ScaleProfile, opts: &ModelOptions) -> Result<Network<T>> {
    plain_chain(ModelKind::P3da, profile, opts)
}

/// rC3D backbone for one stream: each stage's last block pools spatially.
pub(crate) fn rc3d_backbone<T: Scalar>(b: &mut Builder<'_, T>, prefix: &str, profile: &ScaleProfile) -> Result<()> {
    for (i, widths) in profile.stages.iter().enumerate() {
        for (j, &w) in widths.iter().enumerate() {
            b.rc3d(format!("{prefix}.s{i}.b{j}"), w, j + 1 == widths.len())?;
        }
    }
    b.stack_pool(format!("{prefix}.stackpool"))
}

pub(crate) fn rc3d_head<T: Scalar>(b: &mut Builder<'_, T>, profile: &ScaleProfile, opts: &ModelOptions) -> Result<()> {
    b.flatten("head.flatten".into())?;
    b.linear("head.fc1".into(), profile.head_width, true)?;
    b.linear("head.cls".into(), opts.class_count, false)
}

pub fn build_rc3d<T: Scalar>(profile: &ScaleProfile, opts: &ModelOptions) -> Result<Network<T>> {
    profile.validate()?;
    let input = rgb_input(profile);
    let mut store = ParamStore::new();
    let stages = {
        let mut b = Builder::new(&mut store, opts, [&[1][..], &input[..]].concat());
        rc3d_backbone(&mut b, "rgb", profile)?;
        rc3d_head(&mut b, profile, opts)?;
        b.stages
    };
    Ok(finish(ModelKind::Rc3d, store, stages, input, opts))
}

pub fn build_network<T: Scalar>(kind: ModelKind, profile: &ScaleProfile, opts: &ModelOptions) -> Result<Network<T>> {
    match kind {
        ModelKind::C3d => build_c3d(profile, opts),
        ModelKind::P3da => build_p3da(profile, opts),
        ModelKind::Rc3d => build_rc3d(profile, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_logit_shapes_and_determinism() {
        let p = ScaleProfile::toy();
        let opts = ModelOptions::with_seed(3);
        let x = Tensor::<f32>::zeros(&[1, 3, 3, 32, 32]).unwrap();
        for kind in [ModelKind::C3d, ModelKind::P3da, ModelKind::Rc3d] {
            let net = build_network::<f32>(kind, &p, &opts).unwrap();
            let a = net.logits(&x).unwrap();
            assert_eq!(a.shape(), &[1, 16], "{kind}");
            assert!(a.all_finite());
            assert_eq!(a.data(), net.logits(&x).unwrap().data());
            assert_eq!(net.stages.last().unwrap().output, vec![1, 16]);
        }
    }

    #[test]
    fn parameter_ordering_at_equal_profile() {
        for p in [ScaleProfile::toy(), ScaleProfile::full()] {
            let opts = ModelOptions::default();
            let c3d = build_c3d::<f32>(&p, &opts).unwrap().param_count();
            let p3d = build_p3da::<f32>(&p, &opts).unwrap().param_count();
            let rc3d = build_rc3d::<f32>(&p, &opts).unwrap().param_count();
            assert!(rc3d < p3d && p3d < c3d, "{}: {rc3d} {p3d} {c3d}", p.name);
        }
    }

    #[test]
    fn too_small_input_names_the_stage() {
        let p = ScaleProfile::toy().with_input_extent(8);
        let err = build_c3d::<f32>(&p, &ModelOptions::default()).unwrap_err();
        match err {
            Error::InvalidArgument(m) => assert!(m.contains("rgb.s3.pool"), "{m}"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn dead_branch_rc3d_still_finite() {
        let mut net = build_rc3d::<f32>(&ScaleProfile::toy(), &ModelOptions::with_seed(1)).unwrap();
        net.zero_branch_terminals();
        let x = Tensor::from_fn(&[2, 3, 3, 32, 32], |i| (i % 13) as f32 / 13.0).unwrap();
        let y = net.logits(&x).unwrap();
        assert_eq!(y.shape(), &[2, 16]);
        assert!(y.all_finite());
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let net = build_rc3d::<f32>(&ScaleProfile::toy(), &ModelOptions::default()).unwrap();
        assert!(net.logits(&Tensor::zeros(&[1, 3, 3, 16, 16]).unwrap()).is_err());
    }
}
