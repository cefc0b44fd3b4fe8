//! Central finite differences against the reverse-mode rules, for every op,
//! block, loss and the toy networks. Each case runs with analytic gradients
//! in f64 and in f32; the finite differences are always taken in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rc3d_core::blocks::{DeconvBlock, DeconvConfig, DoConv, P3dBlockA, Rc3dBlock, ResidualConfig, SelfAttention2d};
use rc3d_core::gradcheck::suite::{check_both, perturb_biases, random, small_profile, spread, Case};
use rc3d_core::gradcheck::{check_gradients, check_gradients_mixed, GradCheckConfig, GradCheckReport};
use rc3d_core::models::{build_c3d, build_critic, build_p3da, build_rc3d, build_unet_generator, ModelOptions, MultiStreamNet, StreamConfig, StreamKind};
use rc3d_core::{Activation, Conv2dSpec, ConvSpec, Graph, Initializer, InterpMode, ParamStore, PoolMode, PoolSpec, Tensor};

fn report(r: GradCheckReport) {
    let shrunk: usize = r.tensors.iter().map(|t| t.shrunk).sum();
    let skipped: usize = r.tensors.iter().map(|t| t.skipped).sum();
    println!("{:<24} max rel err {:.2e} (steps shrunk {shrunk}, skipped {skipped})", r.name, r.max_rel_error);
    assert!(r.passed(), "{}: {:?}", r.name, r.worst_tensor());
}

/// Runs `case` with f64 analytic gradients and with f32 ones.
fn check(name: &str, case: &Case<'_>, store: &ParamStore<f64>, inputs: &[Tensor<f64>], cfg: &GradCheckConfig) {
    check_both(name, case, store, inputs, cfg).unwrap().into_iter().for_each(report);
}

fn op(name: &str, case: Case<'_>, inputs: &[Tensor<f64>]) {
    check(name, &case, &ParamStore::new(), inputs, &GradCheckConfig::default());
}

#[test]
fn elementwise_and_shape_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for shape in [vec![3], vec![2, 3], vec![2, 2, 3], vec![1, 4, 2, 1], vec![5, 1]] {
        let a = random(&shape, &mut rng);
        let b = random(&shape, &mut rng);
        op("add", Case::Add, &[a.clone(), b.clone()]);
        op("sub", Case::Sub, &[a.clone(), b.clone()]);
        op("mul", Case::Mul, &[a.clone(), b.clone()]);
        op("mul_const", Case::MulConst, std::slice::from_ref(&a));
        op("sigmoid", Case::Sigmoid, std::slice::from_ref(&a));
        op("sum", Case::Sum, std::slice::from_ref(&a));
        op("mean", Case::Mean, std::slice::from_ref(&a));
        op("shifted_leaky_relu", Case::Act, &[spread(&shape, &mut rng)]);
        op("scale", Case::Scale, &[random(&[1], &mut rng), a.clone()]);
        op("concat", Case::Concat(shape.len() - 1), &[a.clone(), b]);
        op("flatten", Case::Flatten, &[a]);
    }
}

#[test]
fn activation_slope_at_minus_one() {
    let store = ParamStore::<f64>::new();
    let x = Tensor::new(&[1], vec![-1.0]).unwrap();
    let act = Activation::new(0.1, 0.0).unwrap();
    let r = check_gradients("act", &store, std::slice::from_ref(&x), &GradCheckConfig::default(), |g, v| Ok(g.shifted_leaky_relu(v[0], act))).unwrap();
    assert!(r.passed());
    let mut g = Graph::new(&store);
    let v = g.input(x.with_requires_grad(true));
    let y = g.shifted_leaky_relu(v, act);
    let l = g.sum(y);
    g.backward(l).unwrap();
    assert!((g.grad(v).unwrap()[0] - 0.1).abs() < 1e-15);
}

#[test]
fn matrix_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (n, f, o) in [(1, 1, 1), (2, 3, 4), (3, 5, 2), (4, 2, 6), (2, 7, 3)] {
        op("linear", Case::Linear, &[random(&[n, f], &mut rng), random(&[o, f], &mut rng), random(&[o], &mut rng)]);
        op("softmax", Case::Softmax, &[random(&[n, o + 1], &mut rng)]);
        for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
            let a = if ta { [2, f, n] } else { [2, n, f] };
            let b = if tb { [2, o, f] } else { [2, f, o] };
            op("bmm", Case::Bmm(ta, tb), &[random(&a, &mut rng), random(&b, &mut rng)]);
        }
    }
}

#[test]
fn convolutions() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cases = [
        ((1, 1, 1), (1, 1, 1), (0, 0, 0)),
        ((3, 3, 3), (1, 1, 1), (1, 1, 1)),
        ((1, 3, 3), (1, 2, 2), (0, 1, 1)),
        ((3, 1, 1), (2, 1, 1), (1, 0, 0)),
        ((3, 3, 1), (1, 2, 1), (0, 1, 0)),
    ];
    for (k, s, p) in cases {
        let spec = ConvSpec::new(2, 3, k).with_stride(s).with_padding(p);
        let inputs = [random(&[2, 2, 4, 5, 5], &mut rng), random(&spec.weight_shape(), &mut rng), random(&[3], &mut rng)];
        op("conv3d", Case::Conv3d(spec), &inputs);
        let spec2 = Conv2dSpec::new(2, 3, (k.1, k.2)).with_stride((s.1, s.2)).with_padding((p.1, p.2));
        let inputs = [random(&[2, 2, 5, 6], &mut rng), random(&spec2.weight_shape(), &mut rng), random(&[3], &mut rng)];
        op("conv2d", Case::Conv2d(spec2), &inputs);
    }
}

#[test]
fn pooling_and_resampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (i, shape) in [[1, 1, 2, 4, 4], [2, 2, 3, 4, 5], [1, 3, 4, 6, 6], [2, 1, 1, 3, 3], [1, 2, 2, 2, 6]].into_iter().enumerate() {
        let x = spread(&shape, &mut rng);
        for mode in [PoolMode::Max, PoolMode::Avg] {
            let spec = PoolSpec::new(mode, (1, 2, 2)).with_stride((1, 1 + i % 2, 1 + i % 2));
            op("pool3d", Case::Pool(spec), std::slice::from_ref(&x));
            op("adaptive_pool3d", Case::Adaptive(mode, (1, 2, 2)), std::slice::from_ref(&x));
        }
        op("stack_pool", Case::StackPool, &[x]);
        let x4 = random(&[shape[0], 4, shape[3], shape[4]], &mut rng);
        op("pixel_shuffle", Case::Shuffle, std::slice::from_ref(&x4));
        op("pad_replicate", Case::Pad, std::slice::from_ref(&x4));
        for mode in [InterpMode::Nearest, InterpMode::Bilinear] {
            op("interpolate", Case::Interp((7, 3 + i), mode), std::slice::from_ref(&x4));
        }
        let cfg = GradCheckConfig { train_seed: Some(70 + i as u64), ..Default::default() };
        check("dropout2d", &Case::Dropout, &ParamStore::new(), &[x4], &cfg);
    }
}

#[test]
fn losses() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in [1, 3, 8, 16, 5] {
        op("mse_loss", Case::Mse, &[random(&[n, 2], &mut rng), random(&[n, 2], &mut rng)]);
        let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let probs = Tensor::from_fn(&[n], |_| rng.random_range(0.05..0.95)).unwrap();
        op("bce_loss", Case::Bce(y.clone()), &[probs]);
        op("bce_with_logits", Case::BceLogits(y), &[random(&[n], &mut rng)]);
        let classes: Vec<usize> = (0..n).map(|i| (i * 7) % 16).collect();
        op("cross_entropy", Case::CrossEntropy(classes), &[random(&[n, 16], &mut rng)]);
    }
}

#[test]
fn residual_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let init = Initializer::new(11, 0.1);
    let cfg = GradCheckConfig::default();
    for (c, co, t, h) in [(2, 2, 3, 4), (2, 4, 2, 4), (3, 3, 1, 2), (4, 2, 3, 6), (1, 4, 2, 2)] {
        let x = random(&[1, c, t, h, h], &mut rng);
        let mut store = ParamStore::new();
        let p = P3dBlockA::new(&mut store, &init, "p", ResidualConfig::new(c, co)).unwrap();
        let r = Rc3dBlock::new(&mut store, &init, "r", ResidualConfig::new(c, co), false).unwrap();
        let mp = Rc3dBlock::new(&mut store, &init, "mp", ResidualConfig::new(c, co), true).unwrap();
        perturb_biases(&mut store, &mut rng);
        check("p3d_block_a", &Case::P3d(&p), &store, std::slice::from_ref(&x), &cfg);
        check("rc3d_block", &Case::Rc3d(&r), &store, std::slice::from_ref(&x), &cfg);
        check("rc3d_mp_block", &Case::Rc3d(&mp), &store, std::slice::from_ref(&x), &cfg);
        check("rc3d_block+stack_pool", &Case::Rc3dStackPool(&r), &store, &[x], &cfg);
    }
}

#[test]
fn planar_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let init = Initializer::new(12, 0.1);
    let cfg = GradCheckConfig::default();
    for (c, cs, co, h) in [(4, 2, 3, 2), (8, 4, 8, 3), (2, 2, 2, 1), (6, 3, 5, 2), (4, 4, 4, 2)] {
        let mut store = ParamStore::new();
        let d = DeconvBlock::new(&mut store, &init, "d", DeconvConfig::new(c, cs, co).with_attention(co >= 4)).unwrap();
        let a = SelfAttention2d::new(&mut store, &init, "a", c).unwrap();
        let dc = DoConv::new(&mut store, &init, "dc", Conv2dSpec::same(c, co, 3).with_stride((2, 2)), 0.3, Activation::default()).unwrap();
        perturb_biases(&mut store, &mut rng);
        let x = random(&[2, c, h, h + 1], &mut rng);
        let skip = random(&[2, cs, 2 * h + 1, 2 * h + 2], &mut rng);
        check("deconv_block", &Case::Deconv(&d), &store, &[x.clone(), skip], &cfg);
        check("self_attention_2d", &Case::Attention(&a), &store, std::slice::from_ref(&x), &cfg);
        let train = GradCheckConfig { train_seed: Some(h as u64), ..cfg.clone() };
        check("doconv", &Case::DoConv(&dc), &store, &[x], &train);
    }
}

#[test]
fn toy_networks() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let p = small_profile();
    let opts = ModelOptions::with_seed(13);
    let cfg = GradCheckConfig { max_coords: 16, ..Default::default() };
    let x = random(&[2, 3, 3, 16, 16], &mut rng);
    for (name, mut net) in [("c3d", build_c3d(&p, &opts).unwrap()), ("p3da", build_p3da(&p, &opts).unwrap()), ("rc3d", build_rc3d(&p, &opts).unwrap())] {
        perturb_biases(&mut net.store, &mut rng);
        check(name, &Case::Net(&net, vec![3, 11]), &net.store, std::slice::from_ref(&x), &cfg);
    }

    let all = StreamConfig::new(&StreamKind::ALL).unwrap();
    let mut ms = MultiStreamNet::build(&p, &all, &opts).unwrap();
    perturb_biases(&mut ms.store, &mut rng);
    let inputs = [x, random(&[2, 1, 3, 16, 16], &mut rng), random(&[2, 3, 1, 16, 16], &mut rng)];
    check("multistream", &Case::Multi(&ms, vec![0, 15]), &ms.store, &inputs, &cfg);

    let mut gen = build_unet_generator(&p, &opts).unwrap();
    perturb_biases(&mut gen.store, &mut rng);
    let frame = random(&[1, 3, 16, 16], &mut rng);
    let depth = Tensor::from_fn(&[1, 1, 16, 16], |_| rng.random_range(0.0..1.0)).unwrap();
    check("unet_generator", &Case::Generator(&gen), &gen.store, &[frame, depth], &cfg);

    let mut critic = build_critic(&p, &opts, true).unwrap();
    perturb_biases(&mut critic.store, &mut rng);
    let train = GradCheckConfig { train_seed: Some(13), ..cfg };
    check("critic", &Case::Critic(&critic), &critic.store, &[random(&[2, 1, 16, 16], &mut rng)], &train);
}

#[test]
fn injected_fault_is_named() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let store = ParamStore::<f64>::new();
    let spec = ConvSpec::same(2, 2, (3, 3, 3));
    let inputs = [random(&[1, 2, 3, 4, 4], &mut rng), random(&spec.weight_shape(), &mut rng), random(&[2], &mut rng)];
    let cfg = GradCheckConfig { fault: Some("conv3d".into()), ..Default::default() };
    let r = check_gradients_mixed("conv3d", &store, &inputs, &cfg, &Case::Conv3d(spec)).unwrap();
    assert!(!r.passed());
    assert_eq!(r.name, "conv3d");
}
