//! Elementwise, affine, reduction and matrix ops.

use crate::error::{invalid, mismatch, Result};
use crate::graph::{Graph, Var};
use crate::{Scalar, Tensor};

/// Parameters of `f(x) = max(slope * x, x) - shift`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Activation {
    pub slope: f64,
    pub shift: f64,
}

impl Default for Activation {
    fn default() -> Self {
        Self { slope: 0.1, shift: 0.1 }
    }
}

impl Activation {
    pub fn new(slope: f64, shift: f64) -> Result<Self> {
        if !(slope > 0.0 && slope < 1.0) {
            return Err(invalid(format!("leaky slope must lie in (0, 1), got {slope}")));
        }
        Ok(Self { slope, shift })
    }

    pub fn apply<T: Scalar>(&self, x: T) -> T {
        let y = if x < T::zero() { x * T::of(self.slope) } else { x };
        y - T::of(self.shift)
    }
}

impl<T: Scalar> Graph<'_, T> {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        Ok(self.record("reshape", out, &[x], |ctx| vec![Some(ctx.grad.to_vec())]))
    }

    /// Collapses all axes after the first.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let n = s[0];
        let rest = s[1..].iter().product::<usize>().max(1);
        self.reshape(x, &[n, rest])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(invalid(format!("add: shapes {:?} and {:?} differ", self.shape(a), self.shape(b))));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect();
        let out = Tensor::new(self.shape(a), data)?;
        Ok(self.record("add", out, &[a, b], |ctx| vec![Some(ctx.grad.to_vec()), Some(ctx.grad.to_vec())]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(invalid(format!("sub: shapes {:?} and {:?} differ", self.shape(a), self.shape(b))));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x - y).collect();
        let out = Tensor::new(self.shape(a), data)?;
        Ok(self.record("sub", out, &[a, b], |ctx| {
            vec![Some(ctx.grad.to_vec()), Some(ctx.grad.iter().map(|&g| -g).collect())]
        }))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(invalid(format!("mul: shapes {:?} and {:?} differ", self.shape(a), self.shape(b))));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let out = Tensor::new(self.shape(a), data)?;
        Ok(self.record("mul", out, &[a, b], |ctx| {
            let (ad, bd) = (ctx.inputs[0].data(), ctx.inputs[1].data());
            vec![
                ctx.needs[0].then(|| ctx.grad.iter().zip(bd).map(|(&g, &v)| g * v).collect()),
                ctx.needs[1].then(|| ctx.grad.iter().zip(ad).map(|(&g, &v)| g * v).collect()),
            ]
        }))
    }

    /// `gamma * x` for a single-element `gamma`.
    pub fn scale(&mut self, gamma: Var, x: Var) -> Result<Var> {
        if !self.value(gamma).is_scalar() {
            return Err(invalid("scale: gamma must have exactly one element"));
        }
        let s = self.value(gamma).data()[0];
        let out = self.value(x).map(|v| v * s);
        Ok(self.record("scale", out, &[gamma, x], |ctx| {
            let s = ctx.inputs[0].data()[0];
            let dg = ctx.needs[0].then(|| {
                let acc: f64 = ctx.grad.iter().zip(ctx.inputs[1].data()).map(|(&g, &v)| (g * v).wide()).sum();
                vec![T::of(acc)]
            });
            let dx = ctx.needs[1].then(|| ctx.grad.iter().map(|&g| g * s).collect());
            vec![dg, dx]
        }))
    }

    /// Multiplication by a constant.
    pub fn mul_const(&mut self, x: Var, c: f64) -> Var {
        let k = T::of(c);
        let out = self.value(x).map(|v| v * k);
        self.record("mul_const", out, &[x], move |ctx| vec![Some(ctx.grad.iter().map(|&g| g * k).collect())])
    }

    /// Concatenation along `axis`.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs.first().ok_or_else(|| invalid("concat: no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(invalid(format!("concat: axis {axis} out of range for rank {}", base.len())));
        }
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            if s.len() != base.len() {
                return Err(invalid(format!("concat: rank {} differs from {}", s.len(), base.len())));
            }
            for (i, (&a, &b)) in s.iter().zip(&base).enumerate() {
                if i != axis && a != b {
                    return Err(mismatch("concat", format!("axis {i}"), b, a));
                }
            }
            widths.push(s[axis]);
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&x, &wd) in xs.iter().zip(&widths) {
                let src = self.value(x).data();
                data.extend_from_slice(&src[o * wd * inner..(o + 1) * wd * inner]);
            }
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let out = Tensor::new(&shape, data)?;
        Ok(self.record("concat", out, xs, move |ctx| {
            let mut grads: Vec<Vec<T>> = widths.iter().map(|&wd| Vec::with_capacity(outer * wd * inner)).collect();
            let mut pos = 0;
            for _ in 0..outer {
                for (gi, &wd) in grads.iter_mut().zip(&widths) {
                    gi.extend_from_slice(&ctx.grad[pos..pos + wd * inner]);
                    pos += wd * inner;
                }
            }
            grads.into_iter().map(Some).collect()
        }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum_wide();
        let n = self.value(x).numel();
        self.record("sum", Tensor::scalar(T::of(s)), &[x], move |ctx| vec![Some(vec![ctx.grad[0]; n])])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).numel();
        let s = self.value(x).sum_wide() / n as f64;
        self.record("mean", Tensor::scalar(T::of(s)), &[x], move |ctx| {
            vec![Some(vec![ctx.grad[0] / T::of(n as f64); n])]
        })
    }

    /// `sum(x * weights)` accumulated in 64-bit, with constant `weights`.
    pub fn dot_const(&mut self, x: Var, weights: &Tensor<T>) -> Result<Var> {
        if self.shape(x) != weights.shape() {
            return Err(invalid(format!("dot_const: shapes {:?} and {:?} differ", self.shape(x), weights.shape())));
        }
        let s: f64 = self.value(x).data().iter().zip(weights.data()).map(|(a, b)| a.wide() * b.wide()).sum();
        let w = weights.data().to_vec();
        Ok(self.record("dot_const", Tensor::scalar(T::of(s)), &[x], move |ctx| {
            vec![Some(w.iter().map(|&v| v * ctx.grad[0]).collect())]
        }))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
        self.record("sigmoid", out, &[x], |ctx| {
            vec![Some(ctx.grad.iter().zip(ctx.output.data()).map(|(&g, &y)| g * y * (T::one() - y)).collect())]
        })
    }

    /// `max(slope * x, x) - shift`; the derivative at 0 is taken as 1.
    pub fn shifted_leaky_relu(&mut self, x: Var, act: Activation) -> Var {
        let out = self.value(x).map(|v| act.apply(v));
        if self.tracking_branches() {
            let signs: Vec<u64> = self.value(x).data().iter().map(|&v| (v < T::zero()) as u64).collect();
            self.note_branches(signs);
        }
        let slope = T::of(act.slope);
        self.record("shifted_leaky_relu", out, &[x], move |ctx| {
            vec![Some(
                ctx.grad
                    .iter()
                    .zip(ctx.inputs[0].data())
                    .map(|(&g, &v)| if v < T::zero() { g * slope } else { g })
                    .collect(),
            )]
        })
    }

    /// `x [N,F] * w^T [F,G] + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x).to_vec(), self.shape(w).to_vec(), self.shape(b).to_vec());
        if xs.len() != 2 || ws.len() != 2 {
            return Err(invalid(format!("linear: expected [N,F] input and [G,F] weight, got {xs:?} and {ws:?}")));
        }
        let (n, f, gdim) = (xs[0], xs[1], ws[0]);
        if ws[1] != f {
            return Err(mismatch("linear", "features (weight axis 1)", f, ws[1]));
        }
        if bs != [gdim] {
            return Err(mismatch("linear", "bias (axis 0)", gdim, bs.iter().product()));
        }
        let mut out = vec![T::zero(); n * gdim];
        for row in out.chunks_mut(gdim) {
            row.copy_from_slice(self.value(b).data());
        }
        T::gemm(n, f, gdim, T::one(), self.value(x).data(), (f as isize, 1), self.value(w).data(), (1, f as isize), T::one(), &mut out, (gdim as isize, 1));
        let out = Tensor::new(&[n, gdim], out)?;
        Ok(self.record("linear", out, &[x, w, b], move |ctx| {
            let (xd, wd, gy) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.grad);
            let dx = ctx.needs[0].then(|| {
                let mut d = vec![T::zero(); n * f];
                T::gemm(n, gdim, f, T::one(), gy, (gdim as isize, 1), wd, (f as isize, 1), T::zero(), &mut d, (f as isize, 1));
                d
            });
            let dw = ctx.needs[1].then(|| {
                let mut d = vec![T::zero(); gdim * f];
                T::gemm(gdim, n, f, T::one(), gy, (1, gdim as isize), xd, (f as isize, 1), T::zero(), &mut d, (f as isize, 1));
                d
            });
            let db = ctx.needs[2].then(|| {
                let mut d = vec![T::zero(); gdim];
                for row in gy.chunks(gdim) {
                    d.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
                }
                d
            });
            vec![dx, dw, db]
        }))
    }

    /// Batched product of `[B,m,k]` and `[B,k,n]`; `ta`/`tb` read the
    /// operands as stored transposed (`[B,k,m]`, `[B,n,k]`).
    pub fn bmm(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let (as_, bs) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if as_.len() != 3 || bs.len() != 3 {
            return Err(invalid(format!("bmm: expected rank-3 operands, got {as_:?} and {bs:?}")));
        }
        if as_[0] != bs[0] {
            return Err(mismatch("bmm", "batch (axis 0)", as_[0], bs[0]));
        }
        let batch = as_[0];
        let (m, k) = if ta { (as_[2], as_[1]) } else { (as_[1], as_[2]) };
        let (k2, n) = if tb { (bs[2], bs[1]) } else { (bs[1], bs[2]) };
        if k != k2 {
            return Err(mismatch("bmm", "contraction", k, k2));
        }
        // strides of the logical [m,k] and [k,n] operands
        let sa = if ta { (1isize, m as isize) } else { (k as isize, 1) };
        let sb = if tb { (1isize, k as isize) } else { (n as isize, 1) };
        let mut out = vec![T::zero(); batch * m * n];
        for i in 0..batch {
            let ad = &self.value(a).data()[i * m * k..(i + 1) * m * k];
            let bd = &self.value(b).data()[i * k * n..(i + 1) * k * n];
            T::gemm(m, k, n, T::one(), ad, sa, bd, sb, T::zero(), &mut out[i * m * n..(i + 1) * m * n], (n as isize, 1));
        }
        let out = Tensor::new(&[batch, m, n], out)?;
        Ok(self.record("bmm", out, &[a, b], move |ctx| {
            let (ad, bd, gy) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.grad);
            let da = ctx.needs[0].then(|| {
                let mut d = vec![T::zero(); batch * m * k];
                for i in 0..batch {
                    let g = &gy[i * m * n..(i + 1) * m * n];
                    let bb = &bd[i * k * n..(i + 1) * k * n];
                    let di = &mut d[i * m * k..(i + 1) * m * k];
                    // dA_logical[m,k] = G[m,n] * B^T[n,k], written in A's storage layout
                    let dst = if ta { (1isize, m as isize) } else { (k as isize, 1) };
                    T::gemm(m, n, k, T::one(), g, (n as isize, 1), bb, (sb.1, sb.0), T::zero(), di, dst);
                }
                d
            });
            let db = ctx.needs[1].then(|| {
                let mut d = vec![T::zero(); batch * k * n];
                for i in 0..batch {
                    let g = &gy[i * m * n..(i + 1) * m * n];
                    let aa = &ad[i * m * k..(i + 1) * m * k];
                    let di = &mut d[i * k * n..(i + 1) * k * n];
                    // dB_logical[k,n] = A^T[k,m] * G[m,n]
                    let dst = if tb { (1isize, k as isize) } else { (n as isize, 1) };
                    T::gemm(k, m, n, T::one(), aa, (sa.1, sa.0), g, (n as isize, 1), T::zero(), di, dst);
                }
                d
            });
            vec![da, db]
        }))
    }

    /// Softmax over the last axis, with max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let k = *shape.last().ok_or_else(|| invalid("softmax: empty shape"))?;
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(k) {
            softmax_row(row);
        }
        let out = Tensor::new(&shape, out)?;
        Ok(self.record("softmax", out, &[x], move |ctx| {
            let mut dx = vec![T::zero(); ctx.grad.len()];
            for ((d, g), y) in dx.chunks_mut(k).zip(ctx.grad.chunks(k)).zip(ctx.output.data().chunks(k)) {
                let dot: f64 = g.iter().zip(y).map(|(&a, &b)| (a * b).wide()).sum();
                let dot = T::of(dot);
                for i in 0..k {
                    d[i] = y[i] * (g[i] - dot);
                }
            }
            vec![Some(dx)]
        }))
    }
}

pub(crate) fn softmax_row<T: Scalar>(row: &mut [T]) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut z = 0.0f64;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        z += v.wide();
    }
    let inv = T::of(1.0 / z);
    row.iter_mut().for_each(|v| *v *= inv);
}
