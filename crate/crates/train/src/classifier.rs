//! Minibatch training and evaluation of the video classifiers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rc3d_core::models::Classifier;
use rc3d_core::{Graph, ParamStore, Tensor};
use rc3d_data::Clip;

use crate::error::{config, Result};
use crate::hyper::{epoch_order, mix_seed, Hyper, TAG_AUGMENT, TAG_DROPOUT};
use crate::inputs::{bind, collate, ClipInputs, StreamInputs};
use crate::metrics::{accuracy, EpochRecord, Metrics, MetricsLog};

pub const PHASE: &str = "classifier";
const PHASE_ID: u64 = 10;

/// Accuracy (percent) and mean cross-entropy over a split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Eval-mode logits `[N,K]` for one batch.
pub fn batch_logits(net: &dyn Classifier<f32>, batch: &[&ClipInputs]) -> Result<Tensor<f32>> {
    let mut g = Graph::new(net.store());
    let vars = bind(&mut g, collate(batch)?);
    let y = net.forward(&mut g, &vars)?;
    Ok(g.value(y).clone())
}

fn argmax(row: &[f32]) -> usize {
    row.iter()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Argmax class per clip; ties go to the lower index.
pub fn predict(net: &dyn Classifier<f32>, inputs: &[ClipInputs], batch_size: usize) -> Result<Vec<usize>> {
    Ok(evaluate_detailed(net, inputs, batch_size)?.0)
}

fn evaluate_detailed(net: &dyn Classifier<f32>, inputs: &[ClipInputs], batch_size: usize) -> Result<(Vec<usize>, f64)> {
    if batch_size == 0 {
        return Err(config("batch_size must be at least 1"));
    }
    let mut pred = Vec::with_capacity(inputs.len());
    let mut loss = 0.0;
    for chunk in inputs.chunks(batch_size) {
        let refs: Vec<&ClipInputs> = chunk.iter().collect();
        let logits = batch_logits(net, &refs)?;
        let k = logits.shape()[1];
        for (row, c) in logits.data().chunks(k).zip(chunk) {
            pred.push(argmax(row));
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v as f64));
            let lse = m + row.iter().map(|&v| (v as f64 - m).exp()).sum::<f64>().ln();
            loss += lse - row[c.label] as f64;
        }
    }
    Ok((pred, loss / inputs.len().max(1) as f64))
}

/// Argmax accuracy and mean loss; no augmentation, no dropout.
pub fn evaluate_split(net: &dyn Classifier<f32>, inputs: &[ClipInputs], batch_size: usize) -> Result<Evaluation> {
    let (pred, loss) = evaluate_detailed(net, inputs, batch_size)?;
    let labels: Vec<usize> = inputs.iter().map(|c| c.label).collect();
    Ok(Evaluation { accuracy: accuracy(&pred, &labels)?, loss })
}

/// Argmax accuracy in percent.
pub fn evaluate(net: &dyn Classifier<f32>, inputs: &[ClipInputs], batch_size: usize) -> Result<f64> {
    Ok(evaluate_split(net, inputs, batch_size)?.accuracy)
}

pub type ParamGrads = Vec<(rc3d_core::ParamId, Vec<f32>)>;

/// Loss of one batch and the parameter gradients, in training mode.
pub fn batch_gradients(net: &dyn Classifier<f32>, batch: &[&ClipInputs], dropout_seed: u64) -> Result<(f64, ParamGrads)> {
    let labels: Vec<usize> = batch.iter().map(|c| c.label).collect();
    let mut g = Graph::new(net.store()).training(dropout_seed);
    let vars = bind(&mut g, collate(batch)?);
    let y = net.forward(&mut g, &vars)?;
    let loss = g.cross_entropy(y, &labels)?;
    g.backward(loss)?;
    Ok((g.value(loss).data()[0] as f64, g.param_grads()))
}

pub struct ClassifierRun {
    /// Metrics after the last epoch.
    pub metrics: Metrics,
    pub best_epoch: usize,
    pub best_metrics: Metrics,
    /// Parameters at the best validation accuracy (earliest on ties).
    pub best: ParamStore<f32>,
    /// Epoch 0 is the untrained network.
    pub history: Vec<EpochRecord>,
}

/// Trains `net` in place. Every epoch reshuffles the training clips,
/// augments each one from `(seed, epoch, clip index)` and then evaluates
/// both splits without augmentation.
pub fn train_classifier(
    net: &mut dyn Classifier<f32>,
    train: &[Clip],
    valid: &[Clip],
    inputs: &StreamInputs<'_>,
    hyper: &Hyper,
    log: &mut MetricsLog,
) -> Result<ClassifierRun> {
    if train.is_empty() || valid.is_empty() {
        return Err(config(format!("training needs both splits, got {} training and {} validation clips", train.len(), valid.len())));
    }
    hyper.validate()?;
    inputs.check()?;
    let opt = hyper.optimizer();
    let train_eval = inputs.prepare(train)?;
    let valid_eval = inputs.prepare(valid)?;

    let mut history = Vec::with_capacity(hyper.epochs + 1);
    let mut record = |net: &dyn Classifier<f32>, epoch: usize, train_loss: Option<f64>| -> Result<EpochRecord> {
        let t = evaluate_split(net, &train_eval, hyper.batch_size)?;
        let v = evaluate_split(net, &valid_eval, hyper.batch_size)?;
        let rec = EpochRecord {
            train_loss: train_loss.or(Some(t.loss)),
            train_accuracy: Some(t.accuracy),
            valid_loss: Some(v.loss),
            valid_accuracy: Some(v.accuracy),
            ..EpochRecord::new(PHASE, epoch)
        };
        log.record(&rec)?;
        Ok(rec)
    };

    let first = record(&*net, 0, None)?;
    let mut best = (first.valid_accuracy.unwrap_or(0.0), 0, net.store().clone(), first.metrics());
    history.push(first);
    for epoch in 1..=hyper.epochs {
        let augmented = train
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[hyper.seed, PHASE_ID, TAG_AUGMENT, epoch as u64, i as u64]));
                inputs.clip(&c.augment(&hyper.augment, &mut rng)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let order = epoch_order(train.len(), hyper.seed, PHASE_ID, epoch);
        let mut loss_sum = 0.0;
        for (step, idx) in order.chunks(hyper.batch_size).enumerate() {
            let batch: Vec<&ClipInputs> = idx.iter().map(|&i| &augmented[i]).collect();
            let seed = mix_seed(&[hyper.seed, PHASE_ID, TAG_DROPOUT, epoch as u64, step as u64]);
            let (loss, grads) = batch_gradients(&*net, &batch, seed)?;
            loss_sum += loss * batch.len() as f64;
            net.store_mut().set_grads(grads)?;
            opt.step(net.store_mut())?;
        }
        let rec = record(&*net, epoch, Some(loss_sum / train.len() as f64))?;
        if let Some(acc) = rec.valid_accuracy.filter(|&a| a > best.0) {
            best = (acc, epoch, net.store().clone(), rec.metrics());
        }
        history.push(rec);
    }
    let last = history.last().and_then(EpochRecord::metrics).expect("every epoch records both accuracies");
    Ok(ClassifierRun {
        metrics: last,
        best_epoch: best.1,
        best_metrics: best.3.expect("every epoch records both accuracies"),
        best: best.2,
        history,
    })
}
