use crate::error::Result;
use crate::param::ParamStore;
use crate::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    Sgd { lr: f64, momentum: f64, weight_decay: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn sgd(lr: f64, momentum: f64) -> Self {
        Self::Sgd { lr, momentum, weight_decay: 0.0 }
    }

    pub fn adam(lr: f64) -> Self {
        Self::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Self::Sgd { lr, .. } | Self::Adam { lr, .. } => lr,
        }
    }

    /// Applies one update from the gradients held in each parameter's value.
    /// A parameter without a gradient buffer is treated as having zero
    /// gradient.
    pub fn step<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        for p in store.iter_mut() {
            let n = p.value.numel();
            let grad: Vec<f64> = match p.value.grad() {
                Some(g) => g.iter().map(|v| v.wide()).collect(),
                None => vec![0.0; n],
            };
            p.step += 1;
            match *self {
                Self::Sgd { lr, momentum, weight_decay } => {
                    let buf = p.momentum.get_or_insert_with(|| zeros_like(&p.value));
                    let (value, buf) = (p.value.data_mut(), buf.data_mut());
                    for i in 0..n {
                        let g = grad[i] + weight_decay * value[i].wide();
                        let b = momentum * buf[i].wide() + g;
                        buf[i] = T::of(b);
                        value[i] = T::of(value[i].wide() - lr * b);
                    }
                }
                Self::Adam { lr, beta1, beta2, eps } => {
                    let t = p.step as i32;
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let m = p.moment1.get_or_insert_with(|| zeros_like(&p.value));
                    let v = p.moment2.get_or_insert_with(|| zeros_like(&p.value));
                    let (value, m, v) = (p.value.data_mut(), m.data_mut(), v.data_mut());
                    for i in 0..n {
                        let g = grad[i];
                        let mi = beta1 * m[i].wide() + (1.0 - beta1) * g;
                        let vi = beta2 * v[i].wide() + (1.0 - beta2) * g * g;
                        m[i] = T::of(mi);
                        v[i] = T::of(vi);
                        let update = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
                        value[i] = T::of(value[i].wide() - update);
                    }
                }
            }
        }
        Ok(())
    }
}

fn zeros_like<T: Scalar>(t: &Tensor<T>) -> Tensor<T> {
    Tensor::zeros(t.shape()).expect("shape of an existing tensor is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> (ParamStore<f64>, crate::ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("p", Tensor::scalar(value)).unwrap();
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let (mut s, id) = single(1.25);
        s.value_mut(id).accumulate_grad(&[0.0]).unwrap();
        Optimizer::sgd(0.1, 0.9).step(&mut s).unwrap();
        assert_eq!(s.value(id).data()[0], 1.25);
    }

    #[test]
    fn plain_sgd_step() {
        let (mut s, id) = single(1.0);
        s.value_mut(id).accumulate_grad(&[1.0]).unwrap();
        Optimizer::sgd(0.1, 0.0).step(&mut s).unwrap();
        assert!((s.value(id).data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn adam_minimises_square() {
        let (mut s, id) = single(1.0);
        let opt = Optimizer::adam(0.1);
        for _ in 0..200 {
            let p = s.value(id).data()[0];
            s.value_mut(id).zero_grad();
            s.value_mut(id).accumulate_grad(&[2.0 * p]).unwrap();
            opt.step(&mut s).unwrap();
        }
        assert!(s.value(id).data()[0].abs() < 0.01, "{}", s.value(id).data()[0]);
        assert_eq!(s.get(id).step, 200);
    }
}
