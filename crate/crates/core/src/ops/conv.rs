//! 3-D and 2-D cross-correlation with zero padding.
//!
//! Both are lowered to im2col followed by a gemm per batch element. A 2-D
//! convolution is the 3-D kernel with a unit temporal axis.

use rayon::prelude::*;

use crate::error::{invalid, mismatch, Result};
use crate::graph::{Graph, Var};
use crate::{Scalar, Tensor};

/// Geometry of a 3-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: (usize, usize, usize),
    pub stride: (usize, usize, usize),
    pub padding: (usize, usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: (usize, usize, usize)) -> Self {
        Self {
            kernel,
            stride: (1, 1, 1),
            padding: (0, 0, 0),
            in_channels,
            out_channels,
        }
    }

    /// Stride 1, padding chosen to keep extents for odd kernels.
    pub fn same(in_channels: usize, out_channels: usize, kernel: (usize, usize, usize)) -> Self {
        Self::new(in_channels, out_channels, kernel).with_padding((kernel.0 / 2, kernel.1 / 2, kernel.2 / 2))
    }

    pub fn with_stride(mut self, stride: (usize, usize, usize)) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, padding: (usize, usize, usize)) -> Self {
        self.padding = padding;
        self
    }

    pub fn weight_shape(&self) -> [usize; 5] {
        [self.out_channels, self.in_channels, self.kernel.0, self.kernel.1, self.kernel.2]
    }

    pub fn weight_count(&self) -> usize {
        self.weight_shape().iter().product()
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1 * self.kernel.2
    }

    /// Output extents for input extents `(t, h, w)`.
    pub fn output_extents(&self, input: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(invalid("convolution channel counts must be positive"));
        }
        let axes = [
            ("temporal", input.0, self.kernel.0, self.stride.0, self.padding.0),
            ("height", input.1, self.kernel.1, self.stride.1, self.padding.1),
            ("width", input.2, self.kernel.2, self.stride.2, self.padding.2),
        ];
        let mut out = [0; 3];
        for (i, (axis, len, k, s, p)) in axes.into_iter().enumerate() {
            if k == 0 || s == 0 {
                return Err(invalid(format!("{axis} axis: kernel and stride must be positive")));
            }
            if len + 2 * p < k {
                return Err(invalid(format!(
                    "{axis} axis: kernel {k} exceeds padded extent {}",
                    len + 2 * p
                )));
            }
            out[i] = (len + 2 * p - k) / s + 1;
        }
        Ok((out[0], out[1], out[2]))
    }
}

/// Geometry of a 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Conv2dSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel: (usize, usize)) -> Self {
        Self {
            kernel,
            stride: (1, 1),
            padding: (0, 0),
            in_channels,
            out_channels,
        }
    }

    pub fn same(in_channels: usize, out_channels: usize, k: usize) -> Self {
        Self::new(in_channels, out_channels, (k, k)).with_padding((k / 2, k / 2))
    }

    pub fn with_stride(mut self, stride: (usize, usize)) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, padding: (usize, usize)) -> Self {
        self.padding = padding;
        self
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel.0, self.kernel.1]
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel.0 * self.kernel.1
    }

    pub fn as_3d(&self) -> ConvSpec {
        ConvSpec {
            kernel: (1, self.kernel.0, self.kernel.1),
            stride: (1, self.stride.0, self.stride.1),
            padding: (0, self.padding.0, self.padding.1),
            in_channels: self.in_channels,
            out_channels: self.out_channels,
        }
    }

    pub fn output_extents(&self, input: (usize, usize)) -> Result<(usize, usize)> {
        let (_, h, w) = self.as_3d().output_extents((1, input.0, input.1))?;
        Ok((h, w))
    }
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    c: usize,
    t: usize,
    h: usize,
    w: usize,
    co: usize,
    k: (usize, usize, usize),
    s: (usize, usize, usize),
    p: (usize, usize, usize),
    o: (usize, usize, usize),
}

impl Geometry {
    fn in_len(&self) -> usize {
        self.c * self.t * self.h * self.w
    }
    fn rows(&self) -> usize {
        self.c * self.k.0 * self.k.1 * self.k.2
    }
    fn cols(&self) -> usize {
        self.o.0 * self.o.1 * self.o.2
    }
    fn out_len(&self) -> usize {
        self.co * self.cols()
    }
    fn pointwise(&self) -> bool {
        self.k == (1, 1, 1) && self.s == (1, 1, 1) && self.p == (0, 0, 0)
    }
}

fn geometry(op: &'static str, x: &[usize], w: &[usize], b: &[usize], spec: &ConvSpec) -> Result<Geometry> {
    if x.len() != 5 {
        return Err(invalid(format!("{op}: input must be rank 5 [N,C,T,H,W], got {x:?}")));
    }
    let ws = spec.weight_shape();
    if w.len() != 5 {
        return Err(invalid(format!("{op}: weight must be rank 5, got {w:?}")));
    }
    let names = ["out_channels (weight axis 0)", "in_channels (weight axis 1)", "kernel_t (weight axis 2)", "kernel_h (weight axis 3)", "kernel_w (weight axis 4)"];
    for (i, name) in names.iter().enumerate() {
        if w[i] != ws[i] {
            return Err(mismatch(op, *name, ws[i], w[i]));
        }
    }
    if x[1] != spec.in_channels {
        return Err(mismatch(op, "channels (input axis 1)", spec.in_channels, x[1]));
    }
    if b != [spec.out_channels] {
        return Err(mismatch(op, "bias (axis 0)", spec.out_channels, b.iter().product()));
    }
    let o = spec.output_extents((x[2], x[3], x[4]))?;
    Ok(Geometry {
        n: x[0],
        c: x[1],
        t: x[2],
        h: x[3],
        w: x[4],
        co: spec.out_channels,
        k: spec.kernel,
        s: spec.stride,
        p: spec.padding,
        o,
    })
}

fn im2col<T: Scalar>(x: &[T], g: &Geometry, col: &mut [T]) {
    let (kt, kh, kw) = g.k;
    let (ot, oh, ow) = g.o;
    let cols = g.cols();
    let mut row = 0;
    for c in 0..g.c {
        let xc = &x[c * g.t * g.h * g.w..(c + 1) * g.t * g.h * g.w];
        for dt in 0..kt {
            for dh in 0..kh {
                for dw in 0..kw {
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    let mut idx = 0;
                    for a in 0..ot {
                        let it = (a * g.s.0 + dt) as isize - g.p.0 as isize;
                        for bb in 0..oh {
                            let ih = (bb * g.s.1 + dh) as isize - g.p.1 as isize;
                            let valid_th = it >= 0 && (it as usize) < g.t && ih >= 0 && (ih as usize) < g.h;
                            if !valid_th {
                                dst[idx..idx + ow].iter_mut().for_each(|v| *v = T::zero());
                                idx += ow;
                                continue;
                            }
                            let base = (it as usize * g.h + ih as usize) * g.w;
                            for cc in 0..ow {
                                let iw = (cc * g.s.2 + dw) as isize - g.p.2 as isize;
                                dst[idx] = if iw >= 0 && (iw as usize) < g.w {
                                    xc[base + iw as usize]
                                } else {
                                    T::zero()
                                };
                                idx += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn col2im<T: Scalar>(col: &[T], g: &Geometry, dx: &mut [T]) {
    let (kt, kh, kw) = g.k;
    let (ot, oh, ow) = g.o;
    let cols = g.cols();
    let mut row = 0;
    for c in 0..g.c {
        let xc = &mut dx[c * g.t * g.h * g.w..(c + 1) * g.t * g.h * g.w];
        for dt in 0..kt {
            for dh in 0..kh {
                for dw in 0..kw {
                    let src = &col[row * cols..(row + 1) * cols];
                    let mut idx = 0;
                    for a in 0..ot {
                        let it = (a * g.s.0 + dt) as isize - g.p.0 as isize;
                        for bb in 0..oh {
                            let ih = (bb * g.s.1 + dh) as isize - g.p.1 as isize;
                            if !(it >= 0 && (it as usize) < g.t && ih >= 0 && (ih as usize) < g.h) {
                                idx += ow;
                                continue;
                            }
                            let base = (it as usize * g.h + ih as usize) * g.w;
                            for cc in 0..ow {
                                let iw = (cc * g.s.2 + dw) as isize - g.p.2 as isize;
                                if iw >= 0 && (iw as usize) < g.w {
                                    xc[base + iw as usize] += src[idx];
                                }
                                idx += 1;
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

fn forward_kernel<T: Scalar>(x: &[T], w: &[T], b: &[T], g: &Geometry) -> Vec<T> {
    let mut out = vec![T::zero(); g.n * g.out_len()];
    let (rows, cols) = (g.rows(), g.cols());
    out.par_chunks_mut(g.out_len())
        .zip(x.par_chunks(g.in_len()))
        .for_each(|(yn, xn)| {
            for (co, chunk) in yn.chunks_mut(cols).enumerate() {
                chunk.iter_mut().for_each(|v| *v = b[co]);
            }
            if g.pointwise() {
                T::gemm(g.co, rows, cols, T::one(), w, (rows as isize, 1), xn, (cols as isize, 1), T::one(), yn, (cols as isize, 1));
            } else {
                let mut col = vec![T::zero(); rows * cols];
                im2col(xn, g, &mut col);
                T::gemm(g.co, rows, cols, T::one(), w, (rows as isize, 1), &col, (cols as isize, 1), T::one(), yn, (cols as isize, 1));
            }
        });
    out
}

struct ConvGrads<T> {
    dx: Option<Vec<T>>,
    dw: Option<Vec<T>>,
    db: Option<Vec<T>>,
}

fn backward_kernel<T: Scalar>(x: &[T], w: &[T], gy: &[T], g: &Geometry, needs: (bool, bool, bool)) -> ConvGrads<T> {
    let (rows, cols) = (g.rows(), g.cols());
    let per_sample: Vec<(Vec<T>, Vec<T>)> = x
        .par_chunks(g.in_len())
        .zip(gy.par_chunks(g.out_len()))
        .map(|(xn, gn)| {
            let mut dxn = Vec::new();
            let mut dwn = Vec::new();
            let col_owned;
            let col: &[T] = if g.pointwise() {
                xn
            } else if needs.1 {
                let mut c = vec![T::zero(); rows * cols];
                im2col(xn, g, &mut c);
                col_owned = c;
                &col_owned
            } else {
                &[]
            };
            if needs.1 {
                dwn = vec![T::zero(); g.co * rows];
                // dW = gY [co x cols] * col^T [cols x rows]
                T::gemm(g.co, cols, rows, T::one(), gn, (cols as isize, 1), col, (1, cols as isize), T::zero(), &mut dwn, (rows as isize, 1));
            }
            if needs.0 {
                dxn = vec![T::zero(); g.in_len()];
                if g.pointwise() {
                    T::gemm(rows, g.co, cols, T::one(), w, (1, rows as isize), gn, (cols as isize, 1), T::zero(), &mut dxn, (cols as isize, 1));
                } else {
                    let mut dcol = vec![T::zero(); rows * cols];
                    T::gemm(rows, g.co, cols, T::one(), w, (1, rows as isize), gn, (cols as isize, 1), T::zero(), &mut dcol, (cols as isize, 1));
                    col2im(&dcol, g, &mut dxn);
                }
            }
            (dxn, dwn)
        })
        .collect();

    let dx = needs.0.then(|| per_sample.iter().flat_map(|(d, _)| d.iter().copied()).collect());
    let dw = needs.1.then(|| {
        let mut acc = vec![T::zero(); g.co * rows];
        for (_, d) in &per_sample {
            acc.iter_mut().zip(d).for_each(|(a, &v)| *a += v);
        }
        acc
    });
    let db = needs.2.then(|| {
        let mut acc = vec![T::zero(); g.co];
        for gn in gy.chunks(g.out_len()) {
            for (co, chunk) in gn.chunks(cols).enumerate() {
                acc[co] += chunk.iter().copied().sum::<T>();
            }
        }
        acc
    });
    ConvGrads { dx, dw, db }
}

/// Plain (non-differentiable) 3-D convolution of tensors.
pub fn conv3d_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, spec: &ConvSpec) -> Result<Tensor<T>> {
    let g = geometry("conv3d", x.shape(), w.shape(), b.shape(), spec)?;
    let data = forward_kernel(x.data(), w.data(), b.data(), &g);
    Tensor::new(&[g.n, g.co, g.o.0, g.o.1, g.o.2], data)
}

fn shape_2d_as_3d(op: &'static str, s: &[usize]) -> Result<Vec<usize>> {
    if s.len() != 4 {
        return Err(invalid(format!("{op}: expected rank 4, got {s:?}")));
    }
    Ok(vec![s[0], s[1], 1, s[2], s[3]])
}

impl<T: Scalar> Graph<'_, T> {
    pub fn conv3d(&mut self, x: Var, w: Var, b: Var, spec: &ConvSpec) -> Result<Var> {
        let geo = geometry("conv3d", self.shape(x), self.shape(w), self.shape(b), spec)?;
        let data = forward_kernel(self.value(x).data(), self.value(w).data(), self.value(b).data(), &geo);
        let out = Tensor::new(&[geo.n, geo.co, geo.o.0, geo.o.1, geo.o.2], data)?;
        Ok(self.record("conv3d", out, &[x, w, b], move |ctx| {
            let gr = backward_kernel(ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.grad, &geo, (ctx.needs[0], ctx.needs[1], ctx.needs[2]));
            vec![gr.dx, gr.dw, gr.db]
        }))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, spec: &Conv2dSpec) -> Result<Var> {
        let xs = shape_2d_as_3d("conv2d", self.shape(x))?;
        let ws = shape_2d_as_3d("conv2d", self.shape(w))?;
        let geo = geometry("conv2d", &xs, &ws, self.shape(b), &spec.as_3d())?;
        let data = forward_kernel(self.value(x).data(), self.value(w).data(), self.value(b).data(), &geo);
        let out = Tensor::new(&[geo.n, geo.co, geo.o.1, geo.o.2], data)?;
        Ok(self.record("conv2d", out, &[x, w, b], move |ctx| {
            let gr = backward_kernel(ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.grad, &geo, (ctx.needs[0], ctx.needs[1], ctx.needs[2]));
            vec![gr.dx, gr.dw, gr.db]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_extent_formula() {
        let spec = ConvSpec::new(1, 1, (3, 3, 3)).with_stride((1, 2, 2)).with_padding((1, 1, 1));
        assert_eq!(spec.output_extents((3, 8, 7)).unwrap(), (3, 4, 4));
        assert!(ConvSpec::new(1, 1, (3, 3, 3)).output_extents((2, 8, 8)).is_err());
    }

    #[test]
    fn identity_kernel_returns_input() {
        let x = Tensor::<f32>::from_fn(&[2, 1, 2, 3, 4], |i| i as f32 * 0.5 - 3.0).unwrap();
        let w = Tensor::full(&[1, 1, 1, 1, 1], 1.0).unwrap();
        let b = Tensor::zeros(&[1]).unwrap();
        let y = conv3d_forward(&x, &w, &b, &ConvSpec::new(1, 1, (1, 1, 1))).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_input_yields_bias_per_channel() {
        let spec = ConvSpec::same(2, 3, (3, 3, 3));
        let x = Tensor::<f32>::zeros(&[1, 2, 3, 4, 4]).unwrap();
        let w = Tensor::from_fn(&spec.weight_shape(), |i| (i % 7) as f32).unwrap();
        let b = Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let y = conv3d_forward(&x, &w, &b, &spec).unwrap();
        for (i, v) in y.data().iter().enumerate() {
            assert_eq!(*v, b.data()[i / 48]);
        }
    }

    #[test]
    fn constant_image_with_ones_kernel_gives_nine_c() {
        let mut g = Graph::<f64>::detached();
        let x = g.input(Tensor::full(&[1, 1, 5, 5], 0.3).unwrap());
        let w = g.input(Tensor::full(&[1, 1, 3, 3], 1.0).unwrap());
        let b = g.input(Tensor::zeros(&[1]).unwrap());
        let y = g.conv2d(x, w, b, &Conv2dSpec::new(1, 1, (3, 3))).unwrap();
        assert_eq!(g.shape(y), &[1, 1, 3, 3]);
        for v in g.value(y).data() {
            assert!((v - 2.7).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_channels_name_the_axis() {
        let spec = ConvSpec::new(3, 4, (1, 1, 1));
        let x = Tensor::<f32>::zeros(&[1, 2, 1, 1, 1]).unwrap();
        let w = Tensor::zeros(&spec.weight_shape()).unwrap();
        let b = Tensor::zeros(&[4]).unwrap();
        let err = conv3d_forward(&x, &w, &b, &spec).unwrap_err().to_string();
        assert!(err.contains("input axis 1"), "{err}");
    }
}
