use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rc3d_core::loss::{BinaryPrediction, PredictionPair};
use rc3d_core::models::*;
use rc3d_core::{Graph, Optimizer, Tensor};
use rc3d_data::{sample_video, segment_three_frames, Clip, GenConfig, Preprocess};
use rc3d_train::*;

fn clips(range: std::ops::Range<usize>, seed: u64) -> Vec<Clip> {
    let cfg = GenConfig { extent: 48, ..GenConfig::new(1, seed) };
    range
        .map(|i| segment_three_frames(&sample_video(&cfg, i).unwrap()).unwrap().preprocess(&Preprocess::new(32)).unwrap())
        .collect()
}

fn rgb_only() -> StreamConfig {
    StreamConfig::new(&[StreamKind::Rgb]).unwrap()
}

#[test]
fn mse_matches_sequential_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y_hat: Vec<f64> = (0..1000).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut oracle = 0.0f64;
    for i in 0..1000 {
        oracle += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
    }
    oracle /= 1000.0;
    let mut g = Graph::<f32>::detached();
    let t = g.constant(Tensor::new(&[1000], y.iter().map(|&v| v as f32).collect()).unwrap());
    let p = g.input(Tensor::new(&[1000], y_hat.iter().map(|&v| v as f32).collect()).unwrap().with_requires_grad(true));
    let l = g.mse_loss(p, t).unwrap();
    let rel = (g.value(l).data()[0] as f64 - oracle).abs() / oracle;
    assert!(rel < 1e-6, "relative error {rel}");
    assert!((PredictionPair::new(&y, &y_hat).unwrap().mse() - oracle).abs() / oracle < 1e-12);
}

#[test]
fn bce_matches_per_element_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let y: Vec<f64> = (0..257).map(|_| f64::from(rng.random_bool(0.4))).collect();
    let q: Vec<f64> = (0..257).map(|_| rng.random_range(0.001..0.999)).collect();
    let oracle: f64 = y.iter().zip(&q).map(|(&y, &q)| if y == 1.0 { -q.ln() } else { -(1.0 - q).ln() }).sum::<f64>() / 257.0;
    assert!((BinaryPrediction::new(&y, &q).unwrap().bce() - oracle).abs() < 1e-12);
    let mut g = Graph::<f64>::detached();
    let v = g.input(Tensor::new(&[257], q).unwrap().with_requires_grad(true));
    let l = g.bce_loss(v, &y).unwrap();
    assert!((g.value(l).data()[0] - oracle).abs() < 1e-12);
}

#[test]
fn cross_entropy_uniform_and_margin() {
    let mut g = Graph::<f64>::detached();
    let x = g.constant(Tensor::zeros(&[3, 16]).unwrap());
    let l = g.cross_entropy(x, &[0, 7, 15]).unwrap();
    assert!((g.value(l).data()[0] - 16f64.ln()).abs() < 1e-12);
    let mut prev = f64::INFINITY;
    for m in 0..20 {
        let mut g = Graph::<f64>::detached();
        let x = g.constant(Tensor::from_fn(&[1, 16], |i| if i == 4 { m as f64 * 0.5 } else { 0.0 }).unwrap());
        let l = g.cross_entropy(x, &[4]).unwrap();
        let v = g.value(l).data()[0];
        assert!(v < prev);
        prev = v;
    }
}

#[test]
fn random_predictor_sits_at_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 4000;
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..16)).collect();
    let guesses: Vec<usize> = (0..n).map(|_| rng.random_range(0..16)).collect();
    let acc = accuracy(&guesses, &labels).unwrap();
    assert!((acc - 6.25).abs() < 1.5, "accuracy {acc}");
    assert_eq!(accuracy(&labels, &labels).unwrap(), 100.0);
}

fn single_sample_loss(net: &dyn Classifier<f32>, x: &ClipInputs) -> f64 {
    let mut g = Graph::new(net.store());
    let vars = inputs_vars(&mut g, x);
    let y = net.forward(&mut g, &vars).unwrap();
    let l = g.cross_entropy(y, &[x.label]).unwrap();
    g.value(l).data()[0] as f64
}

fn inputs_vars(g: &mut Graph<'_, f32>, x: &ClipInputs) -> StreamVars {
    let mut vars = StreamVars::default();
    for (kind, t) in collate(&[x]).unwrap() {
        let v = g.constant(t);
        vars.set(kind, v);
    }
    vars
}

#[test]
fn one_small_step_lowers_each_networks_loss() {
    let clip = &clips(5..6, 3)[0];
    let profile = ScaleProfile::toy();
    let gen = build_unet_generator::<f32>(&profile, &ModelOptions::with_seed(8)).unwrap();
    let opt = Optimizer::sgd(1e-3, 0.0);
    let all = StreamConfig::new(&StreamKind::ALL).unwrap();
    for (kind, streams) in [
        (ModelKind::C3d, rgb_only()),
        (ModelKind::P3da, rgb_only()),
        (ModelKind::Rc3d, rgb_only()),
        (ModelKind::Rc3d, all),
    ] {
        let cfg = ModelConfig::new(kind, profile.clone(), streams.clone(), 4);
        let mut net = cfg.build_classifier::<f32>().unwrap();
        let x = StreamInputs::new(&streams).with_generator(&gen).clip(clip).unwrap();
        let before = single_sample_loss(&*net, &x);
        let grads = {
            let mut g = Graph::new(net.store());
            let vars = inputs_vars(&mut g, &x);
            let y = net.forward(&mut g, &vars).unwrap();
            let l = g.cross_entropy(y, &[x.label]).unwrap();
            g.backward(l).unwrap();
            g.param_grads()
        };
        net.store_mut().set_grads(grads).unwrap();
        opt.step(net.store_mut()).unwrap();
        let after = single_sample_loss(&*net, &x);
        assert!(after < before, "{kind} {}: {before} -> {after}", streams.list());
    }

    // generator on MSE, critic on BCE
    let mut gen = gen;
    let frames = DepthFrames::from_clips(std::slice::from_ref(clip)).unwrap();
    let before = generator_mse(&gen, &frames, 8).unwrap();
    let grads = {
        let mut g = Graph::new(&gen.store);
        let x = g.constant(frames.rgb.clone());
        let y = gen.forward(&mut g, x).unwrap();
        let t = g.constant(frames.depth.clone());
        let l = g.mse_loss(y, t).unwrap();
        g.backward(l).unwrap();
        g.param_grads()
    };
    gen.store.set_grads(grads).unwrap();
    Optimizer::sgd(1e-2, 0.0).step(&mut gen.store).unwrap();
    assert!(generator_mse(&gen, &frames, 8).unwrap() < before);

    let mut critic = build_critic::<f32>(&profile, &ModelOptions::with_seed(9), true).unwrap();
    let set = CriticSet::new(&frames.depth, &predict_depth(&gen, &frames, 8).unwrap()).unwrap();
    let bce = |c: &Critic<f32>| {
        let mut g = Graph::new(&c.store);
        let x = g.constant(set.maps.clone());
        let y = c.forward(&mut g, x).unwrap();
        let l = g.bce_with_logits(y, &set.labels).unwrap();
        (g.value(l).data()[0] as f64, {
            g.backward(l).unwrap();
            g.param_grads()
        })
    };
    let (before, grads) = bce(&critic);
    critic.store.set_grads(grads).unwrap();
    Optimizer::sgd(1e-3, 0.0).step(&mut critic.store).unwrap();
    assert!(bce(&critic).0 < before);
}

fn tiny_run(seed: u64, lr: f64, epochs: usize) -> ClassifierRun {
    let all = clips(0..48, 11);
    let (train, valid): (Vec<_>, Vec<_>) = all.into_iter().enumerate().partition(|(i, _)| i % 3 != 0);
    let train: Vec<Clip> = train.into_iter().map(|(_, c)| c).collect();
    let valid: Vec<Clip> = valid.into_iter().map(|(_, c)| c).collect();
    let streams = rgb_only();
    let cfg = ModelConfig::new(ModelKind::Rc3d, ScaleProfile::toy(), streams.clone(), seed);
    let mut net = cfg.build_classifier::<f32>().unwrap();
    let hyper = Hyper { lr, epochs, ..Hyper::new(seed) };
    train_classifier(&mut *net, &train, &valid, &StreamInputs::new(&streams), &hyper, &mut MetricsLog::discard()).unwrap()
}

#[test]
fn frozen_network_keeps_its_accuracy() {
    let run = tiny_run(1, 0.0, 3);
    let first = run.history[0].clone();
    for rec in &run.history[1..] {
        assert!((rec.train_accuracy.unwrap() - first.train_accuracy.unwrap()).abs() <= 2.0);
        assert!((rec.valid_accuracy.unwrap() - first.valid_accuracy.unwrap()).abs() <= 2.0);
    }
    assert_eq!(run.best_epoch, 0);
}

#[test]
fn training_is_deterministic() {
    let a = tiny_run(7, 1e-3, 2);
    let b = tiny_run(7, 1e-3, 2);
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.history, b.history);
    let bytes = |r: &ClassifierRun| r.best.iter().flat_map(|(_, p)| p.value.data().to_vec()).map(f32::to_bits).collect::<Vec<_>>();
    assert_eq!(bytes(&a), bytes(&b));
    assert_eq!(a.metrics.variance, a.metrics.training_accuracy - a.metrics.validation_accuracy);
    let c = tiny_run(8, 1e-3, 2);
    assert_ne!(a.history, c.history);
}

#[test]
fn empty_split_is_a_configuration_error() {
    let train = clips(0..4, 1);
    let streams = rgb_only();
    let mut net = ModelConfig::new(ModelKind::Rc3d, ScaleProfile::toy(), streams.clone(), 1).build_classifier::<f32>().unwrap();
    let r = train_classifier(&mut *net, &train, &[], &StreamInputs::new(&streams), &Hyper::new(1), &mut MetricsLog::discard());
    assert!(matches!(r, Err(TrainError::Config(_))));
    let gdepth = StreamConfig::new(&[StreamKind::Rgb, StreamKind::Gdepth]).unwrap();
    let mut net = ModelConfig::new(ModelKind::Rc3d, ScaleProfile::toy(), gdepth.clone(), 1).build_classifier::<f32>().unwrap();
    let r = train_classifier(&mut *net, &train, &train, &StreamInputs::new(&gdepth), &Hyper::new(1), &mut MetricsLog::discard());
    assert!(matches!(r, Err(TrainError::Config(_))));
}

#[test]
fn zero_adversarial_epochs_return_the_pretrained_generator() {
    let train = clips(0..6, 4);
    let valid = clips(6..9, 4);
    let profile = ScaleProfile::toy();
    let mut gen = build_unet_generator::<f32>(&profile, &ModelOptions::with_seed(2)).unwrap();
    let mut critic = build_critic::<f32>(&profile, &ModelOptions::with_seed(3), true).unwrap();
    let schedule = GanSchedule {
        generator_pretrain_epochs: 1,
        critic_pretrain_epochs: 1,
        adversarial_epochs: 0,
        ..GanSchedule::default()
    };
    let run = train_gan(&mut gen, &mut critic, &train, &valid, &schedule, &Hyper::new(5), &mut MetricsLog::discard()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = rc3d_core::io::save_checkpoint(&gen.store, dir.path(), "final").unwrap();
    let b = rc3d_core::io::save_checkpoint(&run.pretrained, dir.path(), "pretrained").unwrap();
    let blob = |p: &std::path::Path| std::fs::read(p.with_extension("bin")).unwrap();
    assert_eq!(blob(&a), blob(&b));
    assert_eq!(run.pretrained_mse, run.final_mse);
    assert_eq!(run.history.iter().map(|r| r.phase.as_str()).collect::<Vec<_>>(), ["generator", "critic"]);

    // one adversarial epoch does move it
    let mut gen2 = build_unet_generator::<f32>(&profile, &ModelOptions::with_seed(2)).unwrap();
    let mut critic2 = build_critic::<f32>(&profile, &ModelOptions::with_seed(3), true).unwrap();
    let schedule = GanSchedule { adversarial_epochs: 1, ..schedule };
    let run2 = train_gan(&mut gen2, &mut critic2, &train, &valid, &schedule, &Hyper::new(5), &mut MetricsLog::discard()).unwrap();
    assert_eq!(run2.pretrained_mse, run.pretrained_mse);
    assert_ne!(run2.final_mse, run2.pretrained_mse);
}
