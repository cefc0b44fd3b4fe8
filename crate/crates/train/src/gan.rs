//! Depth generator training: MSE pretraining, critic pretraining on frozen
//! fakes, then alternating adversarial updates.

use rc3d_core::models::{Critic, UNetGenerator};
use rc3d_core::{Graph, ParamStore, Tensor};
use rc3d_data::Clip;

use crate::error::{config, Result};
use crate::hyper::{epoch_order, mix_seed, Hyper, TAG_DROPOUT};
use crate::metrics::{accuracy, EpochRecord, Metrics, MetricsLog};

pub const PHASE_GENERATOR: &str = "generator";
pub const PHASE_CRITIC: &str = "critic";
pub const PHASE_ADVERSARIAL: &str = "adversarial";

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SwitchMode {
    /// `n` critic steps, then one generator step.
    Ratio(usize),
    /// Critic step while its last loss exceeds the threshold, otherwise a
    /// generator step.
    Threshold(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GanSchedule {
    pub generator_pretrain_epochs: usize,
    pub critic_pretrain_epochs: usize,
    pub adversarial_epochs: usize,
    pub switch: SwitchMode,
    /// Weight of the MSE term in the adversarial generator loss.
    pub lambda: f64,
}

impl Default for GanSchedule {
    fn default() -> Self {
        Self {
            generator_pretrain_epochs: 10,
            critic_pretrain_epochs: 10,
            adversarial_epochs: 5,
            switch: SwitchMode::Ratio(1),
            lambda: 1.0,
        }
    }
}

impl GanSchedule {
    pub fn validate(&self) -> Result<()> {
        match self.switch {
            SwitchMode::Ratio(0) => return Err(config("switch_ratio must be at least 1")),
            SwitchMode::Threshold(t) if !(t > 0.0 && t.is_finite()) => {
                return Err(config(format!("switch threshold must be positive, got {t}")))
            }
            _ => {}
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(config(format!("lambda must be finite and non-negative, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Paired `[N,3,H,W]` rgb and `[N,1,H,W]` depth frames.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthFrames {
    pub rgb: Tensor<f32>,
    pub depth: Tensor<f32>,
}

impl DepthFrames {
    /// Every frame of every clip.
    pub fn from_clips(clips: &[Clip]) -> Result<Self> {
        let first = clips.first().ok_or_else(|| config("no clips to take depth frames from"))?;
        let [t, _, h, w] = first.rgb.shape() else { unreachable!("clips are [T,C,H,W]") };
        let (t, h, w) = (*t, *h, *w);
        let mut rgb = Vec::new();
        let mut depth = Vec::new();
        for c in clips {
            if c.rgb.shape() != first.rgb.shape() {
                return Err(config("clips differ in shape"));
            }
            rgb.extend_from_slice(c.rgb.data());
            depth.extend_from_slice(c.depth.data());
        }
        let n = clips.len() * t;
        Ok(Self {
            rgb: Tensor::new(&[n, 3, h, w], rgb)?,
            depth: Tensor::new(&[n, 1, h, w], depth)?,
        })
    }

    pub fn len(&self) -> usize {
        self.rgb.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rgb_batch(&self, idx: &[usize]) -> Result<Tensor<f32>> {
        gather(&self.rgb, idx)
    }

    pub fn depth_batch(&self, idx: &[usize]) -> Result<Tensor<f32>> {
        gather(&self.depth, idx)
    }
}

fn gather(t: &Tensor<f32>, idx: &[usize]) -> Result<Tensor<f32>> {
    let s = t.shape();
    let per: usize = s[1..].iter().product();
    let mut data = Vec::with_capacity(idx.len() * per);
    for &i in idx {
        data.extend_from_slice(&t.data()[i * per..(i + 1) * per]);
    }
    let mut shape = s.to_vec();
    shape[0] = idx.len();
    Ok(Tensor::new(&shape, data)?)
}

fn all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Generator output for every frame, in batches.
pub fn predict_depth(generator: &UNetGenerator<f32>, frames: &DepthFrames, batch_size: usize) -> Result<Tensor<f32>> {
    let mut out = Vec::with_capacity(frames.depth.numel());
    for idx in all(frames.len()).chunks(batch_size.max(1)) {
        out.extend_from_slice(generator.predict(&frames.rgb_batch(idx)?)?.data());
    }
    Ok(Tensor::new(frames.depth.shape(), out)?)
}

/// MSE of the generator over every frame.
pub fn generator_mse(generator: &UNetGenerator<f32>, frames: &DepthFrames, batch_size: usize) -> Result<f64> {
    let pred = predict_depth(generator, frames, batch_size)?;
    mse(&pred, &frames.depth)
}

fn mse(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<f64> {
    Ok(rc3d_core::loss::PredictionPair::new(b.data(), a.data())?.mse())
}

/// MSE of predicting the mean depth of `reference` everywhere in `frames`.
pub fn mean_depth_baseline(reference: &DepthFrames, frames: &DepthFrames) -> Result<f64> {
    let mean = reference.depth.sum_wide() / reference.depth.numel() as f64;
    let constant = Tensor::full(frames.depth.shape(), mean as f32)?;
    mse(&constant, &frames.depth)
}

/// Real depth (label 1) followed by fakes (label 0).
#[derive(Clone, Debug)]
pub struct CriticSet {
    pub maps: Tensor<f32>,
    pub labels: Vec<f32>,
}

impl CriticSet {
    pub fn new(real: &Tensor<f32>, fake: &Tensor<f32>) -> Result<Self> {
        if real.shape() != fake.shape() {
            return Err(config("real and fake depth maps differ in shape"));
        }
        let n = real.shape()[0];
        let mut shape = real.shape().to_vec();
        shape[0] = 2 * n;
        let data = real.data().iter().chain(fake.data()).copied().collect();
        let labels = (0..2 * n).map(|i| if i < n { 1.0 } else { 0.0 }).collect();
        Ok(Self { maps: Tensor::new(&shape, data)?, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Elementwise BCE of the critic's score map, averaged over the map.
fn critic_loss(g: &mut Graph<'_, f32>, critic: &Critic<f32>, maps: Tensor<f32>, labels: &[f32]) -> Result<rc3d_core::Var> {
    let x = g.constant(maps);
    let s = critic.score_map(g, x)?;
    let per = g.value(s).numel() / labels.len();
    let target: Vec<f32> = labels.iter().flat_map(|&l| std::iter::repeat_n(l, per)).collect();
    Ok(g.bce_with_logits(s, &target)?)
}

fn critic_step(critic: &mut Critic<f32>, maps: Tensor<f32>, labels: &[f32], hyper: &Hyper, seed: u64) -> Result<f64> {
    let (loss, grads) = {
        let mut g = Graph::new(&critic.store).training(seed);
        let l = critic_loss(&mut g, critic, maps, labels)?;
        g.backward(l)?;
        (g.value(l).data()[0] as f64, g.param_grads())
    };
    critic.store.set_grads(grads)?;
    hyper.optimizer().step(&mut critic.store)?;
    Ok(loss)
}

/// Eval-mode accuracy (percent) and mean loss: a map counts as real when
/// its mean logit is positive.
pub fn critic_accuracy(critic: &Critic<f32>, set: &CriticSet, batch_size: usize) -> Result<(f64, f64)> {
    let mut pred = Vec::with_capacity(set.len());
    let mut loss = 0.0;
    for idx in all(set.len()).chunks(batch_size.max(1)) {
        let mut g = Graph::new(&critic.store);
        let labels: Vec<f32> = idx.iter().map(|&i| set.labels[i]).collect();
        let x = g.constant(gather(&set.maps, idx)?);
        let y = critic.forward(&mut g, x)?;
        pred.extend(g.value(y).data().iter().map(|&z| usize::from(z > 0.0)));
        let l = critic_loss(&mut g, critic, gather(&set.maps, idx)?, &labels)?;
        loss += g.value(l).data()[0] as f64 * idx.len() as f64;
    }
    let truth: Vec<usize> = set.labels.iter().map(|&l| l as usize).collect();
    Ok((accuracy(&pred, &truth)?, loss / set.len() as f64))
}

/// Adversarial generator step: `BCE(critic(fake), real) + lambda * MSE`.
/// The critic's gradient with respect to the fake map is taken in a graph
/// of its own and fed back through a constant dot product.
fn generator_adversarial_step(
    generator: &mut UNetGenerator<f32>,
    critic: &Critic<f32>,
    rgb: Tensor<f32>,
    depth: Tensor<f32>,
    lambda: f64,
    hyper: &Hyper,
    seed: u64,
) -> Result<f64> {
    let (total, grads) = {
        let mut g = Graph::new(&generator.store).training(seed);
        let x = g.constant(rgb);
        let fake = generator.forward(&mut g, x)?;
        let (adv, dfake) = {
            let mut c = Graph::new(&critic.store);
            let f = c.input(g.value(fake).clone().with_requires_grad(true));
            let s = critic.score_map(&mut c, f)?;
            let ones = vec![1.0f32; c.value(s).numel()];
            let l = c.bce_with_logits(s, &ones)?;
            c.backward(l)?;
            let d = c.grad(f).ok_or_else(|| config("critic produced no gradient for the fake map"))?.to_vec();
            (c.value(l).data()[0] as f64, Tensor::new(g.shape(fake), d)?)
        };
        let target = g.constant(depth);
        let mse = g.mse_loss(fake, target)?;
        let surrogate = g.dot_const(fake, &dfake)?;
        let weighted = g.mul_const(mse, lambda);
        let loss = g.add(weighted, surrogate)?;
        g.backward(loss)?;
        (adv + lambda * g.value(mse).data()[0] as f64, g.param_grads())
    };
    generator.store.set_grads(grads)?;
    hyper.optimizer().step(&mut generator.store)?;
    Ok(total)
}

pub struct GanRun {
    /// Generator parameters at the end of phase 1.
    pub pretrained: ParamStore<f32>,
    /// Critic accuracies on training and held-out fakes/reals after phase 2.
    pub critic_metrics: Metrics,
    /// Held-out MSE of predicting the training mean depth everywhere.
    pub baseline_mse: f64,
    /// Held-out generator MSE after phase 1 and after phase 3.
    pub pretrained_mse: f64,
    pub final_mse: f64,
    pub history: Vec<EpochRecord>,
}

const GEN_ID: u64 = 20;
const CRITIC_ID: u64 = 21;
const ADV_ID: u64 = 22;

/// Runs the three phases in place on `generator` and `critic`, using every
/// frame of the training clips, and the validation clips as held-out data.
pub fn train_gan(
    generator: &mut UNetGenerator<f32>,
    critic: &mut Critic<f32>,
    train: &[Clip],
    valid: &[Clip],
    schedule: &GanSchedule,
    hyper: &Hyper,
    log: &mut MetricsLog,
) -> Result<GanRun> {
    if train.is_empty() || valid.is_empty() {
        return Err(config(format!("training needs both splits, got {} training and {} validation clips", train.len(), valid.len())));
    }
    schedule.validate()?;
    hyper.validate()?;
    let bs = hyper.batch_size;
    let train_frames = DepthFrames::from_clips(train)?;
    let valid_frames = DepthFrames::from_clips(valid)?;
    let baseline_mse = mean_depth_baseline(&train_frames, &valid_frames)?;
    let mut history = Vec::new();
    let mut push = |rec: EpochRecord, history: &mut Vec<EpochRecord>| -> Result<()> {
        log.record(&rec)?;
        history.push(rec);
        Ok(())
    };

    // phase 1
    for epoch in 1..=schedule.generator_pretrain_epochs {
        let mut sum = 0.0;
        for (step, idx) in epoch_order(train_frames.len(), hyper.seed, GEN_ID, epoch).chunks(bs).enumerate() {
            let seed = mix_seed(&[hyper.seed, GEN_ID, TAG_DROPOUT, epoch as u64, step as u64]);
            let (loss, grads) = {
                let mut g = Graph::new(&generator.store).training(seed);
                let x = g.constant(train_frames.rgb_batch(idx)?);
                let y = generator.forward(&mut g, x)?;
                let t = g.constant(train_frames.depth_batch(idx)?);
                let l = g.mse_loss(y, t)?;
                g.backward(l)?;
                (g.value(l).data()[0] as f64, g.param_grads())
            };
            sum += loss * idx.len() as f64;
            generator.store.set_grads(grads)?;
            hyper.optimizer().step(&mut generator.store)?;
        }
        let rec = EpochRecord {
            train_loss: Some(sum / train_frames.len() as f64),
            valid_loss: Some(generator_mse(generator, &valid_frames, bs)?),
            ..EpochRecord::new(PHASE_GENERATOR, epoch)
        };
        push(rec, &mut history)?;
    }
    let pretrained = generator.store.clone();
    let pretrained_mse = generator_mse(generator, &valid_frames, bs)?;

    // phase 2
    let train_set = CriticSet::new(&train_frames.depth, &predict_depth(generator, &train_frames, bs)?)?;
    let valid_set = CriticSet::new(&valid_frames.depth, &predict_depth(generator, &valid_frames, bs)?)?;
    let mut last_critic_loss = f64::INFINITY;
    for epoch in 1..=schedule.critic_pretrain_epochs {
        let mut sum = 0.0;
        for (step, idx) in epoch_order(train_set.len(), hyper.seed, CRITIC_ID, epoch).chunks(bs).enumerate() {
            let seed = mix_seed(&[hyper.seed, CRITIC_ID, TAG_DROPOUT, epoch as u64, step as u64]);
            let labels: Vec<f32> = idx.iter().map(|&i| train_set.labels[i]).collect();
            sum += critic_step(critic, gather(&train_set.maps, idx)?, &labels, hyper, seed)? * idx.len() as f64;
        }
        last_critic_loss = sum / train_set.len() as f64;
        let (train_acc, _) = critic_accuracy(critic, &train_set, bs)?;
        let (valid_acc, valid_loss) = critic_accuracy(critic, &valid_set, bs)?;
        let rec = EpochRecord {
            train_loss: Some(last_critic_loss),
            train_accuracy: Some(train_acc),
            valid_loss: Some(valid_loss),
            valid_accuracy: Some(valid_acc),
            ..EpochRecord::new(PHASE_CRITIC, epoch)
        };
        push(rec, &mut history)?;
    }
    let critic_metrics = Metrics::new(critic_accuracy(critic, &train_set, bs)?.0, critic_accuracy(critic, &valid_set, bs)?.0);

    // phase 3
    for epoch in 1..=schedule.adversarial_epochs {
        let (mut gen_sum, mut gen_steps) = (0.0, 0usize);
        for (step, idx) in epoch_order(train_frames.len(), hyper.seed, ADV_ID, epoch).chunks(bs).enumerate() {
            let seed = mix_seed(&[hyper.seed, ADV_ID, TAG_DROPOUT, epoch as u64, step as u64]);
            let critic_turn = match schedule.switch {
                SwitchMode::Ratio(r) => step % (r + 1) < r,
                SwitchMode::Threshold(t) => last_critic_loss > t,
            };
            if critic_turn {
                let real = train_frames.depth_batch(idx)?;
                let fake = generator.predict(&train_frames.rgb_batch(idx)?)?;
                let set = CriticSet::new(&real, &fake)?;
                last_critic_loss = critic_step(critic, set.maps, &set.labels, hyper, seed)?;
            } else {
                let rgb = train_frames.rgb_batch(idx)?;
                let depth = train_frames.depth_batch(idx)?;
                gen_sum += generator_adversarial_step(generator, critic, rgb, depth, schedule.lambda, hyper, seed)?;
                gen_steps += 1;
            }
        }
        let fakes = predict_depth(generator, &valid_frames, bs)?;
        let (valid_acc, _) = critic_accuracy(critic, &CriticSet::new(&valid_frames.depth, &fakes)?, bs)?;
        let rec = EpochRecord {
            train_loss: (gen_steps > 0).then(|| gen_sum / gen_steps as f64),
            valid_loss: Some(mse(&fakes, &valid_frames.depth)?),
            valid_accuracy: Some(valid_acc),
            ..EpochRecord::new(PHASE_ADVERSARIAL, epoch)
        };
        push(rec, &mut history)?;
    }
    let final_mse = generator_mse(generator, &valid_frames, bs)?;
    Ok(GanRun {
        pretrained,
        critic_metrics,
        baseline_mse,
        pretrained_mse,
        final_mse,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_checks() {
        GanSchedule::default().validate().unwrap();
        assert!(GanSchedule { switch: SwitchMode::Ratio(0), ..Default::default() }.validate().is_err());
        assert!(GanSchedule { switch: SwitchMode::Threshold(-1.0), ..Default::default() }.validate().is_err());
        assert!(GanSchedule { lambda: -0.5, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn critic_set_orders_reals_first() {
        let real = Tensor::full(&[2, 1, 8, 8], 1.0f32).unwrap();
        let fake = Tensor::zeros(&[2, 1, 8, 8]).unwrap();
        let s = CriticSet::new(&real, &fake).unwrap();
        assert_eq!(s.labels, vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(s.maps.at(&[1, 0, 3, 3]), 1.0);
        assert_eq!(s.maps.at(&[2, 0, 3, 3]), 0.0);
    }

    #[test]
    fn gather_picks_rows() {
        let t = Tensor::from_fn(&[4, 1, 1, 2], |i| i as f32).unwrap();
        assert_eq!(gather(&t, &[3, 0]).unwrap().data(), &[6.0, 7.0, 0.0, 1.0]);
    }
}
