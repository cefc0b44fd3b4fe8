//! Training objectives. All reductions are accumulated in 64-bit.

use crate::error::{invalid, mismatch, Result};
use crate::graph::{Graph, Var};
use crate::{Scalar, Tensor};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-7;

/// Targets `y` and predictions `y_hat` of equal extent.
#[derive(Clone, Debug)]
pub struct PredictionPair<'a, T> {
    pub y: &'a [T],
    pub y_hat: &'a [T],
}

impl<'a, T: Scalar> PredictionPair<'a, T> {
    pub fn new(y: &'a [T], y_hat: &'a [T]) -> Result<Self> {
        if y.len() != y_hat.len() {
            return Err(mismatch("mse", "elements", y.len(), y_hat.len()));
        }
        if y.is_empty() {
            return Err(invalid("mse over zero elements"));
        }
        Ok(Self { y, y_hat })
    }

    /// `(1/n) sum (y_i - y_hat_i)^2`.
    pub fn mse(&self) -> f64 {
        let s: f64 = self.y.iter().zip(self.y_hat).map(|(a, b)| (a.wide() - b.wide()).powi(2)).sum();
        s / self.y.len() as f64
    }
}

/// Binary labels in `{0, 1}` against predicted probabilities.
#[derive(Clone, Debug)]
pub struct BinaryPrediction<'a, T> {
    pub y: &'a [T],
    pub y_hat: &'a [T],
}

impl<'a, T: Scalar> BinaryPrediction<'a, T> {
    pub fn new(y: &'a [T], y_hat: &'a [T]) -> Result<Self> {
        if y.len() != y_hat.len() {
            return Err(mismatch("bce", "elements", y.len(), y_hat.len()));
        }
        if y.is_empty() {
            return Err(invalid("bce over zero elements"));
        }
        Ok(Self { y, y_hat })
    }

    /// Mean of `-y log q - (1 - y) log(1 - q)` with `q` clamped.
    pub fn bce(&self) -> f64 {
        let s: f64 = self.y.iter().zip(self.y_hat).map(|(&y, &q)| bce_term(y.wide(), q.wide())).sum();
        s / self.y.len() as f64
    }
}

fn bce_term(y: f64, q: f64) -> f64 {
    let q = q.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -y * q.ln() - (1.0 - y) * (1.0 - q).ln()
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl<T: Scalar> Graph<'_, T> {
    /// Mean squared error between `pred` and `target`; differentiable in both.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(invalid(format!("mse_loss: shapes {:?} and {:?} differ", self.shape(pred), self.shape(target))));
        }
        let pair = PredictionPair::new(self.value(target).data(), self.value(pred).data())?;
        let loss = pair.mse();
        let n = pair.y.len() as f64;
        Ok(self.record("mse_loss", Tensor::scalar(T::of(loss)), &[pred, target], move |ctx| {
            let k = ctx.grad[0].wide() * 2.0 / n;
            let (p, t) = (ctx.inputs[0].data(), ctx.inputs[1].data());
            let dp: Vec<T> = p.iter().zip(t).map(|(&a, &b)| T::of(k * (a.wide() - b.wide()))).collect();
            let dt = ctx.needs[1].then(|| dp.iter().map(|&v| -v).collect());
            vec![Some(dp), dt]
        }))
    }

    /// Binary cross-entropy on probabilities, averaged over every element
    /// of whatever score map `prob` holds. Clamped entries pass no gradient.
    pub fn bce_loss(&mut self, prob: Var, target: &[T]) -> Result<Var> {
        let pred = BinaryPrediction::new(target, self.value(prob).data())?;
        let loss = pred.bce();
        let clamped: Vec<u64> = self.value(prob).data().iter().map(|q| (!(BCE_EPS..=1.0 - BCE_EPS).contains(&q.wide())) as u64).collect();
        self.note_branches(clamped);
        let n = target.len() as f64;
        let y: Vec<f64> = target.iter().map(|v| v.wide()).collect();
        Ok(self.record("bce_loss", Tensor::scalar(T::of(loss)), &[prob], move |ctx| {
            let g = ctx.grad[0].wide() / n;
            let dq = ctx.inputs[0]
                .data()
                .iter()
                .zip(&y)
                .map(|(&q, &y)| {
                    let q = q.wide();
                    if !(BCE_EPS..=1.0 - BCE_EPS).contains(&q) {
                        return T::zero();
                    }
                    T::of(g * (-y / q + (1.0 - y) / (1.0 - q)))
                })
                .collect();
            vec![Some(dq)]
        }))
    }

    /// `bce_loss(sigmoid(logits), target)` in a numerically stable fused form.
    pub fn bce_with_logits(&mut self, logits: Var, target: &[T]) -> Result<Var> {
        let z = self.value(logits).data();
        if z.len() != target.len() {
            return Err(mismatch("bce_with_logits", "elements", target.len(), z.len()));
        }
        let n = z.len() as f64;
        let y: Vec<f64> = target.iter().map(|v| v.wide()).collect();
        let s: f64 = z.iter().zip(&y).map(|(&z, &y)| softplus(z.wide()) - y * z.wide()).sum();
        Ok(self.record("bce_with_logits", Tensor::scalar(T::of(s / n)), &[logits], move |ctx| {
            let g = ctx.grad[0].wide() / n;
            let dz = ctx.inputs[0]
                .data()
                .iter()
                .zip(&y)
                .map(|(&z, &y)| T::of(g * (1.0 / (1.0 + (-z.wide()).exp()) - y)))
                .collect();
            vec![Some(dz)]
        }))
    }

    /// Softmax cross-entropy of `[N,K]` logits against class indices, mean
    /// over the batch.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let shape = self.shape(logits).to_vec();
        let &[n, k] = shape.as_slice() else {
            return Err(invalid(format!("cross_entropy: expected [N,K] logits, got {shape:?}")));
        };
        if labels.len() != n {
            return Err(mismatch("cross_entropy", "batch", n, labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(invalid(format!("cross_entropy: label {bad} out of range for {k} classes")));
        }
        let mut probs = vec![0.0f64; n * k];
        let mut loss = 0.0;
        for (i, row) in self.value(logits).data().chunks(k).enumerate() {
            let m = row.iter().map(|v| v.wide()).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v.wide() - m).exp()).sum();
            let lse = m + z.ln();
            loss += lse - row[labels[i]].wide();
            for (p, v) in probs[i * k..(i + 1) * k].iter_mut().zip(row) {
                *p = (v.wide() - lse).exp();
            }
        }
        let labels = labels.to_vec();
        Ok(self.record("cross_entropy", Tensor::scalar(T::of(loss / n as f64)), &[logits], move |ctx| {
            let g = ctx.grad[0].wide() / n as f64;
            let mut d: Vec<T> = probs.iter().map(|&p| T::of(g * p)).collect();
            for (i, &l) in labels.iter().enumerate() {
                d[i * k + l] -= T::of(g);
            }
            vec![Some(d)]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_closed_forms() {
        let y = [0.0f32, 0.0];
        assert_eq!(PredictionPair::new(&y, &[1.0, 1.0]).unwrap().mse(), 1.0);
        assert_eq!(PredictionPair::new(&y, &y).unwrap().mse(), 0.0);
        assert!(PredictionPair::<f32>::new(&[], &[]).is_err());
    }

    #[test]
    fn bce_closed_forms() {
        let l = BinaryPrediction::new(&[1.0f64], &[0.5]).unwrap().bce();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let l = BinaryPrediction::new(&[1.0f64], &[1.0]).unwrap().bce();
        assert!(l < 1e-6);
    }

    #[test]
    fn fused_logit_bce_matches_probability_bce() {
        let z = [-3.0f64, -0.2, 0.0, 1.5, 4.0];
        let y = [0.0, 1.0, 1.0, 0.0, 1.0];
        let q: Vec<f64> = z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();
        let want = BinaryPrediction::new(&y, &q).unwrap().bce();
        let mut g = Graph::<f64>::detached();
        let v = g.input(Tensor::new(&[5], z.to_vec()).unwrap());
        let l = g.bce_with_logits(v, &y).unwrap();
        assert!((g.value(l).data()[0] - want).abs() < 1e-12);
    }

    #[test]
    fn uniform_logits_give_log_k() {
        let mut g = Graph::<f32>::detached();
        let v = g.input(Tensor::full(&[3, 16], 0.3).unwrap());
        let l = g.cross_entropy(v, &[0, 7, 15]).unwrap();
        assert!((g.value(l).data()[0] as f64 - 16f64.ln()).abs() < 1e-6);
        assert!(g.cross_entropy(v, &[0, 7, 16]).is_err());
    }

    #[test]
    fn cross_entropy_decreases_with_margin() {
        let mut last = f64::INFINITY;
        for margin in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let mut g = Graph::<f64>::detached();
            let v = g.input(Tensor::from_fn(&[1, 16], |i| if i == 3 { margin } else { 0.0 }).unwrap());
            let l = g.cross_entropy(v, &[3]).unwrap();
            let l = g.value(l).data()[0];
            assert!(l < last);
            last = l;
        }
    }
}
