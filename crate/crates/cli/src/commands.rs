use std::io::Write;

use rc3d_core::gradcheck::suite::standard_suite;
use rc3d_core::gradcheck::GradCheckConfig;
use rc3d_core::io::save_checkpoint;
use rc3d_core::models::{build_critic, build_unet_generator, ModelConfig, StreamKind, UNetGenerator};
use rc3d_data::{generate_dataset, load_sample, segment_three_frames, write_png, Augment, Clip, Dataset, GenConfig, Preprocess, Split, CLASS_NAMES};
use rc3d_flow::{farneback_flow, flow_to_motion_image, FarnebackParams, IntensityFrame};
use rc3d_train::{
    evaluate, train_classifier, train_gan, write_summary, DepthSource, GanSchedule, Hyper, Metrics, MetricsLog, OptimizerKind, StreamInputs, SummaryRow,
    SwitchMode,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const SUMMARY_FILE: &str = "summary.csv";

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn gen_data(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let root = cfg.path("out")?;
    let defaults = GenConfig::new(cfg.get_or("per_class", 20)?, cfg.seed()?);
    let gen = GenConfig {
        extent: cfg.get_or("extent", defaults.extent)?,
        noise: cfg.get_or("noise", defaults.noise)?,
        valid_fraction: cfg.get_or("valid_fraction", defaults.valid_fraction)?,
        ..defaults
    };
    let manifest = generate_dataset(&root, &gen)?;
    cfg.echo(&root)?;
    let (train, valid) = (manifest.class_counts(Split::Train), manifest.class_counts(Split::Valid));
    writeln!(out, "class\ttrain\tvalid")?;
    for (i, name) in CLASS_NAMES.iter().enumerate() {
        writeln!(out, "{name}\t{}\t{}", train[i], valid[i])?;
    }
    writeln!(out, "total\t{}\t{}", manifest.counts.train, manifest.counts.valid)?;
    Ok(())
}

pub fn hyper(cfg: &RunConfig) -> Result<Hyper> {
    let d = Hyper::new(cfg.seed()?);
    let h = Hyper {
        epochs: cfg.get_or("epochs", d.epochs)?,
        batch_size: cfg.get_or("batch_size", d.batch_size)?,
        lr: cfg.get_or("lr", d.lr)?,
        optimizer: cfg.raw("optimizer").map_or(Ok(d.optimizer), OptimizerKind::parse)?,
        momentum: cfg.get_or("momentum", d.momentum)?,
        augment: Augment {
            rotate: cfg.get_or("rotate", d.augment.rotate)?,
            noise_sigma: cfg.get_or("noise_sigma", d.augment.noise_sigma)?,
        },
        ..d
    };
    h.validate()?;
    Ok(h)
}

fn flow_params(cfg: &RunConfig) -> Result<FarnebackParams> {
    let d = FarnebackParams::default();
    let p = FarnebackParams {
        pyramid_levels: cfg.get_or("flow_levels", d.pyramid_levels)?,
        window_size: cfg.get_or("flow_window", d.window_size)?,
        iterations: cfg.get_or("flow_iterations", d.iterations)?,
        ..d
    };
    p.validate()?;
    Ok(p)
}

fn label(cfg: &RunConfig, model: &ModelConfig, depth: DepthSource) -> String {
    if let Some(l) = cfg.raw("label") {
        return l.to_string();
    }
    let mut s = format!("{}-{}", model.kind, model.streams.list().replace(',', "+"));
    if model.streams.has(StreamKind::Gdepth) {
        s.push('@');
        s.push_str(depth.as_str());
    }
    s
}

/// The generator named by `generator`, if any, built for the model's profile.
fn load_generator(cfg: &RunConfig, model: &ModelConfig) -> Result<Option<UNetGenerator<f32>>> {
    if cfg.raw("generator").is_none() {
        return Ok(None);
    }
    let path = cfg.existing_file("generator")?;
    let mut g = build_unet_generator::<f32>(&model.profile, &model.options)?;
    g.store.load_checkpoint(&path)?;
    Ok(Some(g))
}

fn depth_source(cfg: &RunConfig) -> Result<DepthSource> {
    Ok(cfg.raw("depth_source").map_or(Ok(DepthSource::Generated), DepthSource::parse)?)
}

fn needs_generator(model: &ModelConfig, depth: DepthSource, generator: &Option<UNetGenerator<f32>>) -> Result<()> {
    if model.streams.has(StreamKind::Gdepth) && depth == DepthSource::Generated && generator.is_none() {
        return Err(config_err(format!(
            "streams {} need a generator checkpoint (set generator = PATH/generator.json, or depth_source = sensor)",
            model.streams.list()
        )));
    }
    Ok(())
}

fn load_splits(cfg: &RunConfig, extent: usize) -> Result<(Vec<Clip>, Vec<Clip>)> {
    let ds = Dataset::open(cfg.existing_dir("data")?)?;
    let prep = Preprocess::new(extent);
    Ok((ds.clips(Split::Train, &prep)?, ds.clips(Split::Valid, &prep)?))
}

fn print_metrics(out: &mut dyn Write, name: &str, m: &Metrics) -> Result<()> {
    writeln!(out, "{name}: validation {:.2}% training {:.2}% variance {:.2}%", m.validation_accuracy, m.training_accuracy, m.variance)?;
    Ok(())
}

pub fn train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let model = cfg.model()?;
    let depth = depth_source(cfg)?;
    let generator = load_generator(cfg, &model)?;
    needs_generator(&model, depth, &generator)?;
    let hyper = hyper(cfg)?;
    let dir = cfg.path("out")?;
    let (train, valid) = load_splits(cfg, model.profile.input_extent)?;
    cfg.echo(&dir)?;
    std::fs::write(dir.join("model.txt"), model.to_text())?;

    let mut net = model.build_classifier::<f32>()?;
    let mut inputs = StreamInputs::new(&model.streams).with_depth_source(depth);
    inputs.flow = flow_params(cfg)?;
    if let Some(g) = &generator {
        inputs = inputs.with_generator(g);
    }
    let mut log = MetricsLog::create(&dir)?;
    let run = train_classifier(&mut *net, &train, &valid, &inputs, &hyper, &mut log)?;
    save_checkpoint(&run.best, &dir, "model")?;
    save_checkpoint(net.store(), &dir, "final")?;
    let name = label(cfg, &model, depth);
    write_summary(dir.join(SUMMARY_FILE), &[SummaryRow { model: name.clone(), metrics: run.metrics }])?;
    print_metrics(out, &name, &run.metrics)?;
    writeln!(out, "best validation at epoch {} saved as model.json", run.best_epoch)?;
    Ok(())
}

#[derive(Serialize)]
struct GanReport {
    baseline_mse: f64,
    pretrained_mse: f64,
    final_mse: f64,
    critic: Metrics,
}

pub fn gan_schedule(cfg: &RunConfig) -> Result<GanSchedule> {
    let d = GanSchedule::default();
    let switch = match cfg.get::<f64>("switch_threshold")? {
        Some(t) => SwitchMode::Threshold(t),
        None => SwitchMode::Ratio(cfg.get_or("switch_ratio", 1)?),
    };
    let s = GanSchedule {
        generator_pretrain_epochs: cfg.get_or("generator_epochs", d.generator_pretrain_epochs)?,
        critic_pretrain_epochs: cfg.get_or("critic_epochs", d.critic_pretrain_epochs)?,
        adversarial_epochs: cfg.get_or("adversarial_epochs", d.adversarial_epochs)?,
        switch,
        lambda: cfg.get_or("lambda", d.lambda)?,
    };
    s.validate()?;
    Ok(s)
}

pub fn train_gan_cmd(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let model = cfg.model()?;
    let schedule = gan_schedule(cfg)?;
    let hyper = hyper(cfg)?;
    let dir = cfg.path("out")?;
    let (train, valid) = load_splits(cfg, model.profile.input_extent)?;
    cfg.echo(&dir)?;
    let mut generator = build_unet_generator::<f32>(&model.profile, &model.options)?;
    let mut critic = build_critic::<f32>(&model.profile, &model.options, cfg.get_or("attention", true)?)?;
    let mut log = MetricsLog::create(&dir)?;
    let run = train_gan(&mut generator, &mut critic, &train, &valid, &schedule, &hyper, &mut log)?;
    save_checkpoint(&generator.store, &dir, "generator")?;
    save_checkpoint(&run.pretrained, &dir, "generator_pretrained")?;
    save_checkpoint(&critic.store, &dir, "critic")?;
    let report = GanReport {
        baseline_mse: run.baseline_mse,
        pretrained_mse: run.pretrained_mse,
        final_mse: run.final_mse,
        critic: run.critic_metrics,
    };
    std::fs::write(dir.join("gan.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    write_summary(dir.join(SUMMARY_FILE), &[SummaryRow { model: "critic".into(), metrics: run.critic_metrics }])?;
    writeln!(out, "held-out depth MSE: mean baseline {:.5}, pretrained {:.5}, final {:.5}", run.baseline_mse, run.pretrained_mse, run.final_mse)?;
    print_metrics(out, "critic", &run.critic_metrics)?;
    Ok(())
}

pub fn eval(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let model = cfg.model()?;
    let checkpoint = cfg.existing_file("checkpoint")?;
    let mut net = model.build_classifier::<f32>()?;
    net.store_mut().load_checkpoint(&checkpoint)?;
    let depth = depth_source(cfg)?;
    let generator = load_generator(cfg, &model)?;
    needs_generator(&model, depth, &generator)?;
    let batch = hyper(cfg)?.batch_size;
    let (train, valid) = load_splits(cfg, model.profile.input_extent)?;
    if train.is_empty() || valid.is_empty() {
        return Err(config_err("eval needs both splits"));
    }
    let mut inputs = StreamInputs::new(&model.streams).with_depth_source(depth);
    inputs.flow = flow_params(cfg)?;
    if let Some(g) = &generator {
        inputs = inputs.with_generator(g);
    }
    let metrics = Metrics::new(evaluate(&*net, &inputs.prepare(&train)?, batch)?, evaluate(&*net, &inputs.prepare(&valid)?, batch)?);
    let row = SummaryRow { model: label(cfg, &model, depth), metrics };
    writeln!(out, "{}", rc3d_train::metrics::CSV_HEADER)?;
    writeln!(out, "{}", row.to_csv())?;
    if cfg.raw("out").is_some() {
        let dir = cfg.path("out")?;
        cfg.echo(&dir)?;
        write_summary(dir.join(SUMMARY_FILE), &[row])?;
    }
    Ok(())
}

pub fn gradcheck(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let d = GradCheckConfig::default();
    let gc = GradCheckConfig {
        eps: cfg.get_or("eps", d.eps)?,
        tolerance: cfg.get_or("tolerance", d.tolerance)?,
        max_coords: cfg.get_or("max_coords", d.max_coords)?,
        seed: cfg.seed()?,
        fault: cfg.get("fault")?,
        ..d
    };
    let reports = standard_suite(&gc)?;
    let mut failed = Vec::new();
    for r in &reports {
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        writeln!(out, "{:<32} max rel err {:.3e}  {verdict}", r.name, r.max_rel_error)?;
        if !r.passed() {
            failed.push(r.name.clone());
        }
    }
    if cfg.raw("out").is_some() {
        cfg.echo(&cfg.path("out")?)?;
    }
    if !failed.is_empty() {
        return Err(CliError::GradCheck(format!("{} of {} checks failed: {}", failed.len(), reports.len(), failed.join(", "))));
    }
    writeln!(out, "all {} checks passed (tolerance {:e}, eps {:e})", reports.len(), gc.tolerance, gc.eps)?;
    Ok(())
}

pub fn flow_viz(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let ds = Dataset::open(cfg.existing_dir("data")?)?;
    let index: usize = cfg.get_or("sample", 0)?;
    let entry = ds
        .manifest
        .samples
        .get(index)
        .ok_or_else(|| config_err(format!("sample {index} out of range: dataset has {}", ds.manifest.samples.len())))?;
    let clip = segment_three_frames(&load_sample(ds.root.join(&entry.path))?)?;
    let params = flow_params(cfg)?;
    let dir = cfg.path("out")?;
    cfg.echo(&dir)?;
    for t in 0..3 {
        write_png(dir.join(format!("frame_{t}.png")), &clip.rgb_frame(t))?;
    }
    writeln!(out, "sample {} ({}), frames {:?}", entry.path, CLASS_NAMES[entry.label], clip.indices)?;
    for (a, b) in [(0, 1), (1, 2), (0, 2)] {
        let flow = farneback_flow(&IntensityFrame::from_rgb(&clip.rgb_frame(a))?, &IntensityFrame::from_rgb(&clip.rgb_frame(b))?, &params)?;
        let img = flow_to_motion_image(&flow);
        let name = format!("motion_{a}_{b}.png");
        write_png(dir.join(&name), &img)?;
        let peak = flow.magnitudes().into_iter().fold(0.0f32, f32::max);
        writeln!(out, "{name}: {}x{}, peak displacement {peak:.2} px", flow.width, flow.height)?;
    }
    Ok(())
}
