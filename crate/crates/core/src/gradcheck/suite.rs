//! The standard finite-difference suite: every op, block, loss and toy
//! network, each checked with f64 analytic gradients and with f32 ones
//! against f64 differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocks::{stack_pool, DeconvBlock, DeconvConfig, DoConv, P3dBlockA, Rc3dBlock, ResidualConfig, SelfAttention2d};
use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::models::{build_c3d, build_critic, build_p3da, build_rc3d, build_unet_generator, Critic, ModelOptions, MultiStreamNet, Network, ScaleProfile, StreamConfig, StreamKind, StreamVars, UNetGenerator};
use crate::ops::{Activation, Conv2dSpec, ConvSpec, InterpMode, PoolMode, PoolSpec};
use crate::param::ParamStore;
use crate::{Initializer, Scalar, Tensor};

use super::{check_gradients, check_gradients_mixed, GradCheckConfig, GradCheckReport, GradFn};

pub enum Case<'a> {
    Add,
    Sub,
    Mul,
    MulConst,
    Sigmoid,
    Sum,
    Mean,
    Act,
    Scale,
    Concat(usize),
    Flatten,
    Linear,
    Softmax,
    Bmm(bool, bool),
    Conv3d(ConvSpec),
    Conv2d(Conv2dSpec),
    Pool(PoolSpec),
    Adaptive(PoolMode, (usize, usize, usize)),
    StackPool,
    Shuffle,
    Pad,
    Interp((usize, usize), InterpMode),
    Dropout,
    Mse,
    Bce(Vec<f64>),
    BceLogits(Vec<f64>),
    CrossEntropy(Vec<usize>),
    P3d(&'a P3dBlockA),
    Rc3d(&'a Rc3dBlock),
    Rc3dStackPool(&'a Rc3dBlock),
    Deconv(&'a DeconvBlock),
    Attention(&'a SelfAttention2d),
    DoConv(&'a DoConv),
    Net(&'a Network<f64>, Vec<usize>),
    Multi(&'a MultiStreamNet<f64>, Vec<usize>),
    Generator(&'a UNetGenerator<f64>),
    Critic(&'a Critic<f64>),
}

fn labels<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::of(x)).collect()
}

impl GradFn for Case<'_> {
    fn eval<T: Scalar>(&self, g: &mut Graph<'_, T>, v: &[Var]) -> Result<Var> {
        match self {
            Case::Add => g.add(v[0], v[1]),
            Case::Sub => g.sub(v[0], v[1]),
            Case::Mul => g.mul(v[0], v[1]),
            Case::MulConst => Ok(g.mul_const(v[0], -1.7)),
            Case::Sigmoid => Ok(g.sigmoid(v[0])),
            Case::Sum => Ok(g.sum(v[0])),
            Case::Mean => Ok(g.mean(v[0])),
            Case::Act => Ok(g.shifted_leaky_relu(v[0], Activation::default())),
            Case::Scale => g.scale(v[0], v[1]),
            Case::Concat(axis) => g.concat(&[v[0], v[1], v[0]], *axis),
            Case::Flatten => g.flatten(v[0]),
            Case::Linear => g.linear(v[0], v[1], v[2]),
            Case::Softmax => g.softmax(v[0]),
            Case::Bmm(ta, tb) => g.bmm(v[0], v[1], *ta, *tb),
            Case::Conv3d(spec) => g.conv3d(v[0], v[1], v[2], spec),
            Case::Conv2d(spec) => g.conv2d(v[0], v[1], v[2], spec),
            Case::Pool(spec) => g.pool3d(v[0], spec),
            Case::Adaptive(mode, out) => g.adaptive_pool3d(v[0], *mode, *out),
            Case::StackPool => stack_pool(g, v[0]),
            Case::Shuffle => g.pixel_shuffle(v[0], 2),
            Case::Pad => g.pad_replicate(v[0], &[(1, 2), (0, 1)]),
            Case::Interp(out, mode) => g.interpolate(v[0], *out, *mode),
            Case::Dropout => g.dropout2d(v[0], 0.4),
            Case::Mse => g.mse_loss(v[0], v[1]),
            Case::Bce(y) => g.bce_loss(v[0], &labels(y)),
            Case::BceLogits(y) => g.bce_with_logits(v[0], &labels(y)),
            Case::CrossEntropy(y) => g.cross_entropy(v[0], y),
            Case::P3d(b) => b.forward(g, v[0]),
            Case::Rc3d(b) => b.forward(g, v[0]),
            Case::Rc3dStackPool(b) => {
                let y = b.forward(g, v[0])?;
                stack_pool(g, y)
            }
            Case::Deconv(b) => b.forward(g, v[0], v[1]),
            Case::Attention(a) => a.forward(g, v[0]),
            Case::DoConv(d) => d.forward(g, v[0]),
            Case::Net(net, y) => {
                let logits = net.forward(g, v[0])?;
                g.cross_entropy(logits, y)
            }
            Case::Multi(net, y) => {
                let logits = net.fuse(g, &StreamVars { rgb: Some(v[0]), gdepth: Some(v[1]), motion: Some(v[2]) })?;
                g.cross_entropy(logits, y)
            }
            Case::Generator(gen) => {
                let y = gen.forward(g, v[0])?;
                g.mse_loss(y, v[1])
            }
            Case::Critic(c) => {
                let s = c.score_map(g, v[0])?;
                let prob = g.sigmoid(s);
                let n: usize = g.shape(prob).iter().product();
                let y: Vec<T> = (0..n).map(|i| T::of((i < n / 2) as u8 as f64)).collect();
                g.bce_loss(prob, &y)
            }
        }
    }
}

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0)).unwrap()
}

/// Distinct values 0.0137 apart, shuffled: no tie or kink within eps.
pub fn spread(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * 0.0137 + 0.005).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.random_range(0..=i));
    }
    Tensor::new(shape, v).unwrap()
}

/// Moves biases and gains off their zero init so every path carries gradient.
pub fn perturb_biases(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng) {
    for p in store.iter_mut() {
        if p.name.ends_with(".bias") || p.name.ends_with(".gamma") {
            p.value.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.3..0.3));
        }
    }
}

/// Reduced widths so full networks stay cheap to difference.
pub fn small_profile() -> ScaleProfile {
    let mut p = ScaleProfile::toy().with_input_extent(16);
    p.stages = vec![vec![4], vec![6], vec![8, 8]];
    p.head_width = 12;
    p.generator_widths = [4, 4, 6, 6, 8];
    p.critic_widths = [4, 6, 8];
    p
}

/// `case` with f64 analytic gradients, then with f32 ones.
pub fn check_both(name: &str, case: &Case<'_>, store: &ParamStore<f64>, inputs: &[Tensor<f64>], cfg: &GradCheckConfig) -> Result<[GradCheckReport; 2]> {
    let wide = check_gradients(name, store, inputs, cfg, |g, v| case.eval(g, v))?;
    let narrow: Vec<Tensor<f32>> = inputs.iter().map(|t| t.cast()).collect();
    let mixed = check_gradients_mixed(&format!("{name} (f32)"), &store.cast::<f32>(), &narrow, cfg, case)?;
    Ok([wide, mixed])
}

/// One instance of every case at small shapes. `base` supplies tolerance,
/// eps and an optional injected fault.
pub fn standard_suite(base: &GradCheckConfig) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed);
    let mut out = Vec::new();
    let empty = ParamStore::<f64>::new();
    let mut run = |name: &str, case: Case<'_>, store: &ParamStore<f64>, inputs: &[Tensor<f64>], cfg: &GradCheckConfig| -> Result<()> {
        out.extend(check_both(name, &case, store, inputs, cfg)?);
        Ok(())
    };
    let cfg = base.clone();
    let a = random(&[2, 3], &mut rng);
    let b = random(&[2, 3], &mut rng);
    run("add", Case::Add, &empty, &[a.clone(), b.clone()], &cfg)?;
    run("sub", Case::Sub, &empty, &[a.clone(), b.clone()], &cfg)?;
    run("mul", Case::Mul, &empty, &[a.clone(), b.clone()], &cfg)?;
    run("mul_const", Case::MulConst, &empty, std::slice::from_ref(&a), &cfg)?;
    run("sigmoid", Case::Sigmoid, &empty, std::slice::from_ref(&a), &cfg)?;
    run("sum", Case::Sum, &empty, std::slice::from_ref(&a), &cfg)?;
    run("mean", Case::Mean, &empty, std::slice::from_ref(&a), &cfg)?;
    run("shifted_leaky_relu", Case::Act, &empty, &[spread(&[2, 3], &mut rng)], &cfg)?;
    run("scale", Case::Scale, &empty, &[random(&[1], &mut rng), a.clone()], &cfg)?;
    run("concat", Case::Concat(1), &empty, &[a.clone(), b], &cfg)?;
    run("flatten", Case::Flatten, &empty, &[random(&[2, 2, 3], &mut rng)], &cfg)?;
    run("linear", Case::Linear, &empty, &[random(&[2, 3], &mut rng), random(&[4, 3], &mut rng), random(&[4], &mut rng)], &cfg)?;
    run("softmax", Case::Softmax, &empty, &[random(&[3, 5], &mut rng)], &cfg)?;
    run("bmm", Case::Bmm(true, false), &empty, &[random(&[2, 3, 2], &mut rng), random(&[2, 3, 4], &mut rng)], &cfg)?;

    let spec = ConvSpec::new(2, 3, (3, 3, 3)).with_stride((1, 2, 2)).with_padding((1, 1, 1));
    run("conv3d", Case::Conv3d(spec), &empty, &[random(&[2, 2, 3, 5, 5], &mut rng), random(&spec.weight_shape(), &mut rng), random(&[3], &mut rng)], &cfg)?;
    let spec2 = Conv2dSpec::same(2, 3, 3).with_stride((2, 2));
    run("conv2d", Case::Conv2d(spec2), &empty, &[random(&[2, 2, 5, 6], &mut rng), random(&spec2.weight_shape(), &mut rng), random(&[3], &mut rng)], &cfg)?;

    let x = spread(&[2, 2, 3, 4, 5], &mut rng);
    for (name, mode) in [("max", PoolMode::Max), ("avg", PoolMode::Avg)] {
        run(&format!("pool3d {name}"), Case::Pool(PoolSpec::new(mode, (1, 2, 2))), &empty, std::slice::from_ref(&x), &cfg)?;
        run(&format!("adaptive_pool3d {name}"), Case::Adaptive(mode, (1, 2, 2)), &empty, std::slice::from_ref(&x), &cfg)?;
    }
    run("stack_pool", Case::StackPool, &empty, &[x], &cfg)?;
    let x4 = random(&[2, 4, 3, 4], &mut rng);
    run("pixel_shuffle", Case::Shuffle, &empty, std::slice::from_ref(&x4), &cfg)?;
    run("pad_replicate", Case::Pad, &empty, std::slice::from_ref(&x4), &cfg)?;
    run("interpolate nearest", Case::Interp((5, 7), InterpMode::Nearest), &empty, std::slice::from_ref(&x4), &cfg)?;
    run("interpolate bilinear", Case::Interp((5, 7), InterpMode::Bilinear), &empty, std::slice::from_ref(&x4), &cfg)?;
    let train = GradCheckConfig { train_seed: Some(base.seed), ..cfg.clone() };
    run("dropout2d", Case::Dropout, &empty, &[x4], &train)?;

    run("mse_loss", Case::Mse, &empty, &[random(&[4, 2], &mut rng), random(&[4, 2], &mut rng)], &cfg)?;
    let y = vec![0.0, 1.0, 1.0, 0.0];
    let probs = Tensor::from_fn(&[4], |_| rng.random_range(0.05..0.95))?;
    run("bce_loss", Case::Bce(y.clone()), &empty, &[probs], &cfg)?;
    run("bce_with_logits", Case::BceLogits(y), &empty, &[random(&[4], &mut rng)], &cfg)?;
    run("cross_entropy", Case::CrossEntropy(vec![0, 9, 15]), &empty, &[random(&[3, 16], &mut rng)], &cfg)?;

    let init = Initializer::new(base.seed, Activation::default().slope);
    let mut store = ParamStore::new();
    let p = P3dBlockA::new(&mut store, &init, "p", ResidualConfig::new(2, 4))?;
    let r = Rc3dBlock::new(&mut store, &init, "r", ResidualConfig::new(2, 4), false)?;
    let mp = Rc3dBlock::new(&mut store, &init, "mp", ResidualConfig::new(2, 4), true)?;
    let d = DeconvBlock::new(&mut store, &init, "d", DeconvConfig::new(8, 4, 8).with_attention(true))?;
    let att = SelfAttention2d::new(&mut store, &init, "a", 8)?;
    let dc = DoConv::new(&mut store, &init, "dc", Conv2dSpec::same(8, 4, 3).with_stride((2, 2)), 0.3, Activation::default())?;
    perturb_biases(&mut store, &mut rng);
    let x = random(&[1, 2, 2, 4, 4], &mut rng);
    run("p3d_block_a", Case::P3d(&p), &store, std::slice::from_ref(&x), &cfg)?;
    run("rc3d_block", Case::Rc3d(&r), &store, std::slice::from_ref(&x), &cfg)?;
    run("rc3d_mp_block", Case::Rc3d(&mp), &store, std::slice::from_ref(&x), &cfg)?;
    run("rc3d_block+stack_pool", Case::Rc3dStackPool(&r), &store, &[x], &cfg)?;
    let x = random(&[2, 8, 2, 3], &mut rng);
    run("deconv_block", Case::Deconv(&d), &store, &[x.clone(), random(&[2, 4, 5, 6], &mut rng)], &cfg)?;
    run("self_attention_2d", Case::Attention(&att), &store, std::slice::from_ref(&x), &cfg)?;
    run("doconv", Case::DoConv(&dc), &store, &[x], &train)?;

    let p = small_profile();
    let opts = ModelOptions::with_seed(base.seed);
    let net_cfg = GradCheckConfig { max_coords: base.max_coords.min(16), ..cfg.clone() };
    let x = random(&[2, 3, 3, 16, 16], &mut rng);
    for (name, mut net) in [("c3d", build_c3d(&p, &opts)?), ("p3da", build_p3da(&p, &opts)?), ("rc3d", build_rc3d(&p, &opts)?)] {
        perturb_biases(&mut net.store, &mut rng);
        run(name, Case::Net(&net, vec![3, 11]), &net.store, std::slice::from_ref(&x), &net_cfg)?;
    }
    let mut ms = MultiStreamNet::build(&p, &StreamConfig::new(&StreamKind::ALL)?, &opts)?;
    perturb_biases(&mut ms.store, &mut rng);
    let inputs = [x, random(&[2, 1, 3, 16, 16], &mut rng), random(&[2, 3, 1, 16, 16], &mut rng)];
    run("multistream", Case::Multi(&ms, vec![0, 15]), &ms.store, &inputs, &net_cfg)?;
    let mut gen = build_unet_generator(&p, &opts)?;
    perturb_biases(&mut gen.store, &mut rng);
    let depth = Tensor::from_fn(&[1, 1, 16, 16], |_| rng.random_range(0.0..1.0))?;
    run("unet_generator", Case::Generator(&gen), &gen.store, &[random(&[1, 3, 16, 16], &mut rng), depth], &net_cfg)?;
    let mut critic = build_critic(&p, &opts, true)?;
    perturb_biases(&mut critic.store, &mut rng);
    let critic_cfg = GradCheckConfig { train_seed: Some(base.seed), ..net_cfg };
    run("critic", Case::Critic(&critic), &critic.store, &[random(&[2, 1, 16, 16], &mut rng)], &critic_cfg)?;
    Ok(out)
}
