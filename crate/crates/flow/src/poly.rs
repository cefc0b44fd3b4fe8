//! Local quadratic model `I(p + z) ≈ zᵀ A z + bᵀ z + c` at every pixel.

use crate::error::{FlowError, Result};
use crate::frame::{IntensityFrame, Plane};

/// Coefficients of one pixel's fitted quadratic. `x` runs along columns,
/// `y` along rows.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Quadratic {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
    pub b1: f64,
    pub b2: f64,
    pub c: f64,
}

impl Quadratic {
    pub fn a(&self) -> [[f64; 2]; 2] {
        [[self.a11, self.a12], [self.a12, self.a22]]
    }

    pub fn b(&self) -> [f64; 2] {
        [self.b1, self.b2]
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.a11 * x * x + 2.0 * self.a12 * x * y + self.a22 * y * y + self.b1 * x + self.b2 * y + self.c
    }
}

#[derive(Clone, Debug)]
pub struct PolyExpansion {
    pub width: usize,
    pub height: usize,
    pub coeffs: Vec<Quadratic>,
}

impl PolyExpansion {
    pub fn at(&self, x: usize, y: usize) -> Quadratic {
        self.coeffs[y * self.width + x]
    }

    pub(crate) fn planes(&self) -> [Plane; 6] {
        let pick = |f: fn(&Quadratic) -> f64| Plane {
            width: self.width,
            height: self.height,
            data: self.coeffs.iter().map(f).collect(),
        };
        [pick(|q| q.a11), pick(|q| q.a12), pick(|q| q.a22), pick(|q| q.b1), pick(|q| q.b2), pick(|q| q.c)]
    }
}

pub(crate) fn check_poly(poly_n: usize, poly_sigma: f64) -> Result<()> {
    if poly_n < 3 || poly_n.is_multiple_of(2) {
        return Err(FlowError::Invalid(format!("poly_n must be odd and at least 3, got {poly_n}")));
    }
    if !(poly_sigma > 0.0 && poly_sigma.is_finite()) {
        return Err(FlowError::Invalid(format!("poly_sigma must be positive, got {poly_sigma}")));
    }
    Ok(())
}

/// Gaussian-weighted least-squares fit over a `poly_n x poly_n` window,
/// borders replicated.
pub fn polynomial_expansion(frame: &IntensityFrame, poly_n: usize, poly_sigma: f64) -> Result<PolyExpansion> {
    check_poly(poly_n, poly_sigma)?;
    Ok(expand(&frame.wide(), poly_n, poly_sigma))
}

pub(crate) fn expand(img: &Plane, poly_n: usize, poly_sigma: f64) -> PolyExpansion {
    let r = (poly_n / 2) as isize;
    // basis 1, x, y, x², y², xy
    let mut window = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let (x, y) = (dx as f64, dy as f64);
            let w = (-(x * x + y * y) / (2.0 * poly_sigma * poly_sigma)).exp();
            window.push((dx, dy, w, [1.0, x, y, x * x, y * y, x * y]));
        }
    }
    let mut gram = [[0.0; 6]; 6];
    for (_, _, w, phi) in &window {
        for i in 0..6 {
            for j in 0..6 {
                gram[i][j] += w * phi[i] * phi[j];
            }
        }
    }
    let inv = invert6(gram);
    // each coefficient is a fixed linear filter of the window
    let filters: Vec<(isize, isize, [f64; 6])> = window
        .iter()
        .map(|&(dx, dy, w, phi)| {
            let mut f = [0.0; 6];
            for (i, fi) in f.iter_mut().enumerate() {
                *fi = w * (0..6).map(|j| inv[i][j] * phi[j]).sum::<f64>();
            }
            (dx, dy, f)
        })
        .collect();

    let (wd, ht) = (img.width, img.height);
    let mut coeffs = Vec::with_capacity(wd * ht);
    for y in 0..ht as isize {
        for x in 0..wd as isize {
            let mut r = [0.0; 6];
            for &(dx, dy, f) in &filters {
                let v = img.clamped(x + dx, y + dy);
                for i in 0..6 {
                    r[i] += f[i] * v;
                }
            }
            coeffs.push(Quadratic {
                c: r[0],
                b1: r[1],
                b2: r[2],
                a11: r[3],
                a22: r[4],
                a12: 0.5 * r[5],
            });
        }
    }
    PolyExpansion { width: wd, height: ht, coeffs }
}

/// Gauss-Jordan with partial pivoting; the Gram matrix is SPD for any
/// window of at least 3x3.
fn invert6(m: [[f64; 6]; 6]) -> [[f64; 6]; 6] {
    let mut a = m;
    let mut inv = [[0.0; 6]; 6];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..6 {
        let p = (col..6).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, p);
        inv.swap(col, p);
        let d = a[col][col];
        for j in 0..6 {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in 0..6 {
            if i != col {
                let f = a[i][col];
                for j in 0..6 {
                    a[i][j] -= f * a[col][j];
                    inv[i][j] -= f * inv[col][j];
                }
            }
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interior(e: &PolyExpansion, margin: usize) -> impl Iterator<Item = Quadratic> + '_ {
        (margin..e.height - margin).flat_map(move |y| (margin..e.width - margin).map(move |x| e.at(x, y)))
    }

    #[test]
    fn constant_frame() {
        let f = IntensityFrame::from_fn(12, 12, |_, _| 0.4).unwrap();
        for q in interior(&polynomial_expansion(&f, 5, 1.1).unwrap(), 2) {
            assert!((q.c - 0.4).abs() < 1e-6);
            assert!(q.a11.abs() + q.a12.abs() + q.a22.abs() + q.b1.abs() + q.b2.abs() < 1e-6);
        }
    }

    #[test]
    fn exact_quadratic_and_ramp() {
        let sq = IntensityFrame::from_fn(16, 16, |x, _| (x * x) as f32).unwrap();
        for q in interior(&polynomial_expansion(&sq, 5, 1.1).unwrap(), 2) {
            assert!((q.a11 - 1.0).abs() < 1e-3, "{q:?}");
            assert!(q.a12.abs() < 1e-3 && q.a22.abs() < 1e-3);
        }
        let ramp = IntensityFrame::from_fn(16, 16, |x, _| 0.5 * x as f32).unwrap();
        for q in interior(&polynomial_expansion(&ramp, 7, 1.5).unwrap(), 3) {
            assert!((q.b1 - 0.5).abs() < 1e-5, "{q:?}");
            assert!(q.a11.abs() + q.a12.abs() + q.a22.abs() < 1e-5);
        }
    }

    #[test]
    fn mixed_term_is_symmetric_half() {
        let f = IntensityFrame::from_fn(12, 12, |x, y| 0.01 * (x * y) as f32).unwrap();
        let q = polynomial_expansion(&f, 5, 1.1).unwrap().at(6, 6);
        assert!((q.a12 - 0.005).abs() < 1e-6);
        assert!((q.eval(1.0, 1.0) - 0.01 * 49.0).abs() < 1e-5);
    }

    #[test]
    fn even_window_is_rejected() {
        let f = IntensityFrame::from_fn(8, 8, |_, _| 0.0).unwrap();
        assert!(matches!(polynomial_expansion(&f, 4, 1.1), Err(FlowError::Invalid(_))));
    }
}
