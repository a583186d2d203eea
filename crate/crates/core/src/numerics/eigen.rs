//! Dense nonsymmetric eigenvalues plus Perron-root tools for Metzler matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Full spectrum of a dense real matrix.
#[derive(Debug, Clone)]
pub struct DenseEigen {
    /// All eigenvalues with multiplicity, sorted by descending real part.
    pub values: Vec<Complex64>,
    /// Right eigenvector of `values[0]`, unit 1-norm, largest entry real and positive.
    pub dominant_vector: Vec<Complex64>,
}

impl DenseEigen {
    pub fn dominant(&self) -> Complex64 {
        self.values[0]
    }
}

/// Eigenvalues via the real Schur form (Francis QR), dominant eigenvector by
/// inverse iteration.
pub fn dense_eigen(a: &DMatrix<f64>) -> Result<DenseEigen> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::Argument(format!("need a nonempty square matrix, got {}x{}", n, a.ncols())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("matrix has non-finite entries".into()));
    }
    let max_iter = 200 * n.max(10);
    let schur = a.clone().try_schur(f64::EPSILON, max_iter).ok_or_else(|| {
        Error::Numerical(format!("Schur iteration failed for a {n}x{n} matrix after {max_iter} sweeps"))
    })?;
    let mut values: Vec<Complex64> = schur.complex_eigenvalues().iter().copied().collect();
    values.sort_by(|x, y| y.re.total_cmp(&x.re).then(y.im.total_cmp(&x.im)));
    let dominant_vector = inverse_iteration(a, values[0])?;
    Ok(DenseEigen { values, dominant_vector })
}

/// Right eigenvector for the eigenvalue estimate `lambda`.
///
/// Tiny pivots are lifted to `ε‖A‖` and the triangular solves rescale on the
/// fly, so strongly nonnormal matrices (upwind transport) do not overflow.
pub fn inverse_iteration(a: &DMatrix<f64>, lambda: Complex64) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let shift = lambda + Complex64::new(1e-10 * scale, 0.0);
    let mut shifted = a.map(|v| Complex64::new(v, 0.0));
    for i in 0..n {
        shifted[(i, i)] -= shift;
    }
    let lu = GuardedLu::new(shifted, f64::EPSILON * scale);
    let mut x: Vec<Complex64> = (0..n).map(|i| Complex64::new(1.0 + 0.01 * (i % 7) as f64, 0.0)).collect();
    for _ in 0..4 {
        let y = lu.solve(&x);
        let norm: f64 = y.iter().map(|z| z.norm()).sum();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Numerical("inverse iteration produced a degenerate vector".into()));
        }
        x = y.into_iter().map(|z| z / norm).collect();
    }
    Ok(normalize_phase(x))
}

/// Partial-pivoting LU whose solve only determines the solution up to scale.
struct GuardedLu {
    lu: DMatrix<Complex64>,
    perm: Vec<usize>,
}

const RESCALE_AT: f64 = 1e100;

impl GuardedLu {
    fn new(mut lu: DMatrix<Complex64>, floor: f64) -> Self {
        let n = lu.nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| lu[(i, k)].norm().total_cmp(&lu[(j, k)].norm())).unwrap();
            if p != k {
                lu.swap_rows(p, k);
                perm.swap(p, k);
            }
            if lu[(k, k)].norm() < floor {
                lu[(k, k)] = Complex64::new(floor, 0.0);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor != Complex64::new(0.0, 0.0) {
                    for j in k + 1..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= factor * u;
                    }
                }
            }
        }
        Self { lu, perm }
    }

    /// Direction of `A⁻¹ b`; the result is rescaled whenever entries grow large.
    fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = b.len();
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc;
            rescale_if_large(&mut x, i);
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc -= self.lu[(i, j)] * x[j];
            }
            x[i] = acc / self.lu[(i, i)];
            rescale_if_large(&mut x, i);
        }
        x
    }
}

fn rescale_if_large(x: &mut [Complex64], i: usize) {
    let mag = x[i].norm();
    if mag > RESCALE_AT {
        for v in x.iter_mut() {
            *v /= mag;
        }
    }
}

/// Unit 1-norm with the largest-modulus entry rotated onto the positive real axis.
fn normalize_phase(mut v: Vec<Complex64>) -> Vec<Complex64> {
    let pivot = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(Complex64::new(1.0, 0.0));
    let rot = pivot.conj() / pivot.norm();
    let norm: f64 = v.iter().map(|z| z.norm()).sum();
    for z in v.iter_mut() {
        *z = *z * rot / norm;
    }
    v
}

/// True when every off-diagonal entry is at least `-tol`.
pub fn is_metzler(a: &DMatrix<f64>, tol: f64) -> bool {
    let n = a.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || a[(i, j)] >= -tol))
}

/// Whether `t I - A` is a nonsingular M-matrix for a Metzler `A`, i.e. whether
/// `t` exceeds the spectral abscissa. Gaussian elimination without pivoting
/// succeeds with positive pivots exactly in that case.
pub fn exceeds_spectral_abscissa(a: &DMatrix<f64>, t: f64) -> bool {
    let n = a.nrows();
    // row-major copy of tI - A
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = -a[(i, j)];
        }
        m[i * n + i] += t;
    }
    for k in 0..n {
        let pivot = m[k * n + k];
        if !(pivot > 0.0) {
            return false;
        }
        let (top, rest) = m.split_at_mut((k + 1) * n);
        let prow = &top[k * n..k * n + n];
        for i in 0..n - k - 1 {
            let row = &mut rest[i * n..i * n + n];
            let factor = row[k] / pivot;
            if factor != 0.0 {
                for j in k + 1..n {
                    row[j] -= factor * prow[j];
                }
            }
        }
    }
    true
}

/// Spectral abscissa (Perron root) of a Metzler matrix.
///
/// Real eigenvalues from `spectrum` are tried from the right and accepted only
/// when the M-matrix test brackets them; otherwise the abscissa is found by
/// bisection between the largest diagonal entry and the Gershgorin bound.
pub fn metzler_spectral_abscissa(a: &DMatrix<f64>, spectrum: Option<&[Complex64]>) -> f64 {
    if let Some(values) = spectrum {
        let mut reals: Vec<f64> = values
            .iter()
            .filter(|z| z.im.abs() <= 1e-8 * z.re.abs().max(1.0))
            .map(|z| z.re)
            .collect();
        reals.sort_by(|x, y| y.total_cmp(x));
        for c in reals {
            let delta = 1e-9 * c.abs().max(1.0);
            if exceeds_spectral_abscissa(a, c + delta) && !exceeds_spectral_abscissa(a, c - delta) {
                return c;
            }
        }
    }
    metzler_abscissa_bisection(a)
}

fn metzler_abscissa_bisection(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut lo = (0..n).map(|i| a[(i, i)]).fold(f64::NEG_INFINITY, f64::max);
    let mut hi = (0..n)
        .map(|i| a[(i, i)] + (0..n).filter(|&j| j != i).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    if !exceeds_spectral_abscissa(a, hi) {
        hi += 1e-12 * hi.abs().max(1.0);
    }
    if exceeds_spectral_abscissa(a, lo) {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if exceeds_spectral_abscissa(a, mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}
