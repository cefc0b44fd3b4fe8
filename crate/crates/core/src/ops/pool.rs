use crate::error::{invalid, Result};
use crate::graph::{Graph, Var};
use crate::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Avg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolSpec {
    pub mode: PoolMode,
    pub window: (usize, usize, usize),
    pub stride: (usize, usize, usize),
}

impl PoolSpec {
    pub fn new(mode: PoolMode, window: (usize, usize, usize)) -> Self {
        Self { mode, window, stride: window }
    }

    pub fn with_stride(mut self, stride: (usize, usize, usize)) -> Self {
        self.stride = stride;
        self
    }

    pub fn output_extents(&self, input: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let axes = [
            ("temporal", input.0, self.window.0, self.stride.0),
            ("height", input.1, self.window.1, self.stride.1),
            ("width", input.2, self.window.2, self.stride.2),
        ];
        let mut out = [0; 3];
        for (i, (axis, len, k, s)) in axes.into_iter().enumerate() {
            if k == 0 || s == 0 {
                return Err(invalid(format!("pool {axis} axis: window and stride must be positive")));
            }
            if k > len {
                return Err(invalid(format!("pool {axis} axis: window {k} exceeds extent {len}")));
            }
            out[i] = (len - k) / s + 1;
        }
        Ok((out[0], out[1], out[2]))
    }
}

fn dims5(op: &str, s: &[usize]) -> Result<[usize; 5]> {
    match s {
        &[n, c, t, h, w] => Ok([n, c, t, h, w]),
        _ => Err(invalid(format!("{op}: expected rank 5 [N,C,T,H,W], got {s:?}"))),
    }
}

/// One pooling window per output element, as a list of input offsets.
/// Windows are shared by max and average pooling and their backward rules.
fn gather_windows(dims: [usize; 5], bins: &[Vec<(usize, usize)>; 3]) -> Vec<Vec<usize>> {
    let [n, c, t, h, w] = dims;
    let mut out = Vec::new();
    for nc in 0..n * c {
        let base = nc * t * h * w;
        for &(t0, t1) in &bins[0] {
            for &(h0, h1) in &bins[1] {
                for &(w0, w1) in &bins[2] {
                    let mut idx = Vec::with_capacity((t1 - t0) * (h1 - h0) * (w1 - w0));
                    for a in t0..t1 {
                        for b in h0..h1 {
                            for d in w0..w1 {
                                idx.push(base + (a * h + b) * w + d);
                            }
                        }
                    }
                    out.push(idx);
                }
            }
        }
    }
    out
}

fn strided_bins(k: usize, s: usize, o: usize) -> Vec<(usize, usize)> {
    (0..o).map(|i| (i * s, i * s + k)).collect()
}

fn adaptive_bins(len: usize, o: usize) -> Vec<(usize, usize)> {
    (0..o).map(|i| (i * len / o, (i + 1) * len / o)).collect()
}

fn reduce<'s, T: Scalar>(g: &mut Graph<'s, T>, name: &'static str, x: Var, mode: PoolMode, out_shape: [usize; 5], windows: Vec<Vec<usize>>) -> Result<Var> {
    let xd = g.value(x).data();
    let in_len = xd.len();
    match mode {
        PoolMode::Max => {
            let mut arg = Vec::with_capacity(windows.len());
            let mut vals = Vec::with_capacity(windows.len());
            for win in &windows {
                // first occurrence wins on ties
                let mut best = win[0];
                for &i in &win[1..] {
                    if xd[i] > xd[best] {
                        best = i;
                    }
                }
                arg.push(best);
                vals.push(xd[best]);
            }
            let out = Tensor::new(&out_shape, vals)?;
            g.note_branches(arg.iter().map(|&i| i as u64));
            Ok(g.record(name, out, &[x], move |ctx| {
                let mut dx = vec![T::zero(); in_len];
                for (&i, &gy) in arg.iter().zip(ctx.grad) {
                    dx[i] += gy;
                }
                vec![Some(dx)]
            }))
        }
        PoolMode::Avg => {
            let vals = windows
                .iter()
                .map(|win| {
                    let s: f64 = win.iter().map(|&i| xd[i].wide()).sum();
                    T::of(s / win.len() as f64)
                })
                .collect();
            let out = Tensor::new(&out_shape, vals)?;
            Ok(g.record(name, out, &[x], move |ctx| {
                let mut dx = vec![T::zero(); in_len];
                for (win, &gy) in windows.iter().zip(ctx.grad) {
                    let share = gy / T::of(win.len() as f64);
                    for &i in win {
                        dx[i] += share;
                    }
                }
                vec![Some(dx)]
            }))
        }
    }
}

impl<T: Scalar> Graph<'_, T> {
    /// Windowed max/avg pooling over `[N,C,T,H,W]` without padding.
    pub fn pool3d(&mut self, x: Var, spec: &PoolSpec) -> Result<Var> {
        let dims = dims5("pool3d", self.shape(x))?;
        let (ot, oh, ow) = spec.output_extents((dims[2], dims[3], dims[4]))?;
        let bins = [
            strided_bins(spec.window.0, spec.stride.0, ot),
            strided_bins(spec.window.1, spec.stride.1, oh),
            strided_bins(spec.window.2, spec.stride.2, ow),
        ];
        let windows = gather_windows(dims, &bins);
        reduce(self, "pool3d", x, spec.mode, [dims[0], dims[1], ot, oh, ow], windows)
    }

    /// 2-D pooling over `[N,C,H,W]` with a `(k, k)` window and stride `s`.
    pub fn pool2d(&mut self, x: Var, mode: PoolMode, k: usize, s: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let &[n, c, h, w] = shape.as_slice() else {
            return Err(invalid(format!("pool2d: expected rank 4, got {shape:?}")));
        };
        let x5 = self.reshape(x, &[n, c, 1, h, w])?;
        let spec = PoolSpec::new(mode, (1, k, k)).with_stride((1, s, s));
        let y = self.pool3d(x5, &spec)?;
        let ys = self.shape(y).to_vec();
        self.reshape(y, &[ys[0], ys[1], ys[3], ys[4]])
    }

    /// Adaptive pooling: each axis of length `L` is cut into `o` bins
    /// `[floor(i L / o), floor((i+1) L / o))`.
    pub fn adaptive_pool3d(&mut self, x: Var, mode: PoolMode, out: (usize, usize, usize)) -> Result<Var> {
        let dims = dims5("adaptive_pool3d", self.shape(x))?;
        for (axis, o, len) in [("temporal", out.0, dims[2]), ("height", out.1, dims[3]), ("width", out.2, dims[4])] {
            if o == 0 {
                return Err(invalid(format!("adaptive_pool3d: zero output extent on {axis} axis")));
            }
            if o > len {
                return Err(invalid(format!("adaptive_pool3d: {axis} output {o} exceeds input {len}")));
            }
        }
        let bins = [adaptive_bins(dims[2], out.0), adaptive_bins(dims[3], out.1), adaptive_bins(dims[4], out.2)];
        let windows = gather_windows(dims, &bins);
        reduce(self, "adaptive_pool3d", x, mode, [dims[0], dims[1], out.0, out.1, out.2], windows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(x: Tensor<f64>, f: impl FnOnce(&mut Graph<f64>, Var) -> Var) -> Tensor<f64> {
        let mut g = Graph::detached();
        let v = g.input(x);
        let y = f(&mut g, v);
        g.value(y).clone()
    }

    #[test]
    fn two_by_two_window_max_and_mean() {
        let x = Tensor::new(&[1, 1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let spec = PoolSpec::new(PoolMode::Max, (1, 2, 2));
        assert_eq!(run(x.clone(), |g, v| g.pool3d(v, &spec).unwrap()).data(), &[4.0]);
        let spec = PoolSpec::new(PoolMode::Avg, (1, 2, 2));
        assert_eq!(run(x, |g, v| g.pool3d(v, &spec).unwrap()).data(), &[2.5]);
    }

    #[test]
    fn max_gradient_goes_to_first_tied_element() {
        let mut g = Graph::<f64>::detached();
        let x = g.input(Tensor::new(&[1, 1, 1, 2, 2], vec![5.0, 5.0, 1.0, 5.0]).unwrap().with_requires_grad(true));
        let y = g.pool3d(x, &PoolSpec::new(PoolMode::Max, (1, 2, 2))).unwrap();
        let l = g.sum(y);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn window_larger_than_extent_is_rejected() {
        let mut g = Graph::<f32>::detached();
        let x = g.input(Tensor::zeros(&[1, 1, 1, 4, 4]).unwrap());
        assert!(g.pool3d(x, &PoolSpec::new(PoolMode::Max, (2, 2, 2))).is_err());
        assert!(g.adaptive_pool3d(x, PoolMode::Avg, (0, 1, 1)).is_err());
    }

    #[test]
    fn adaptive_to_input_extents_is_identity() {
        let x = Tensor::from_fn(&[1, 2, 2, 3, 3], |i| (i as f64).sin()).unwrap();
        for mode in [PoolMode::Max, PoolMode::Avg] {
            assert_eq!(run(x.clone(), |g, v| g.adaptive_pool3d(v, mode, (2, 3, 3)).unwrap()), x);
        }
    }
}
