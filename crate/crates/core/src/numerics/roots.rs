//! Real root finding: Brent's method and sign-change scanning.

use crate::error::{Error, Result};

const MAX_BRENT_ITERATIONS: usize = 200;

/// Brent's bracketing root finder (inverse quadratic interpolation with
/// secant and bisection safeguards). Returns once the bracket is narrower
/// than `tol` or `f` vanishes exactly.
pub fn bracketed_root(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Argument(format!("tolerance must be positive, got {tol}")));
    }
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a), f(b));
    if !fa.is_finite() {
        return Err(Error::Evaluation { at: a });
    }
    if !fb.is_finite() {
        return Err(Error::Evaluation { at: b });
    }
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket { lo, hi, f_lo: fa, f_hi: fb });
    }

    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..MAX_BRENT_ITERATIONS {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::Evaluation { at: b });
        }
    }
    Err(Error::Convergence { what: "Brent root finder".into(), iterations: MAX_BRENT_ITERATIONS })
}

/// Sample points used by [`scan_sign_changes`]: geometric when `lo > 0`.
pub fn scan_points(lo: f64, hi: f64, n_samples: usize) -> Vec<f64> {
    let last = (n_samples - 1) as f64;
    (0..n_samples)
        .map(|i| {
            let t = i as f64 / last;
            if i + 1 == n_samples {
                hi
            } else if lo > 0.0 {
                lo * (hi / lo).powf(t)
            } else {
                lo + t * (hi - lo)
            }
        })
        .collect()
}

/// Evaluates `f` on `n_samples` points of `[lo, hi]` and returns every adjacent
/// pair across which the sign flips (zero counts as positive).
pub fn scan_sign_changes(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    n_samples: usize,
) -> Result<Vec<(f64, f64)>> {
    if !(lo < hi) || n_samples < 2 {
        return Err(Error::Argument(format!(
            "scan needs lo < hi and at least 2 samples, got [{lo}, {hi}] with {n_samples}"
        )));
    }
    let xs = scan_points(lo, hi, n_samples);
    let mut values = Vec::with_capacity(n_samples);
    for &x in &xs {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::Evaluation { at: x });
        }
        values.push(v);
    }
    Ok(xs
        .windows(2)
        .zip(values.windows(2))
        .filter(|(_, v)| (v[0] < 0.0) != (v[1] < 0.0))
        .map(|(x, _)| (x[0], x[1]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_examples() {
        let r = bracketed_root(|x| x - 0.5, 0.0, 1.0, 1e-12).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        let r = bracketed_root(|x| (1.0 - x).exp() - 1.0, 0.0, 5.0, 1e-12).unwrap();
        assert!((r - 1.0).abs() < 1e-10);
        assert!(matches!(
            bracketed_root(|x| x * x + 1.0, 0.0, 1.0, 1e-12),
            Err(Error::Bracket { .. })
        ));
    }

    #[test]
    fn brent_is_deterministic_and_handles_reversed_bracket() {
        let f = |x: f64| x.powi(3) - 2.0;
        let a = bracketed_root(f, 3.0, 0.0, 1e-13).unwrap();
        let b = bracketed_root(f, 3.0, 0.0, 1e-13).unwrap();
        assert_eq!(a, b);
        assert!((a - 2f64.cbrt()).abs() < 1e-12);
    }

    #[test]
    fn scan_examples() {
        let br = scan_sign_changes(f64::sin, 0.1, 7.0, 100).unwrap();
        assert_eq!(br.len(), 2);
        assert!(br[0].0 < std::f64::consts::PI && std::f64::consts::PI < br[0].1);
        assert!(br[1].0 < 2.0 * std::f64::consts::PI && 2.0 * std::f64::consts::PI < br[1].1);

        assert!(scan_sign_changes(|_| 1.0, 0.0, 1.0, 10).unwrap().is_empty());

        let br = scan_sign_changes(|x| x - 3.0, 0.0, 10.0, 11).unwrap();
        assert_eq!(br.len(), 1);
        assert!(br[0].0 <= 3.0 && 3.0 <= br[0].1);
    }

    #[test]
    fn scan_reports_non_finite_point() {
        let err = scan_sign_changes(|x| if x > 0.5 { f64::NAN } else { x }, 0.0, 1.0, 5).unwrap_err();
        assert_eq!(err, Error::Evaluation { at: 0.75 });
    }

    #[test]
    fn geometric_sampling_when_positive() {
        let xs = scan_points(1e-3, 1e3, 7);
        for w in xs.windows(2) {
            assert!((w[1] / w[0] - 10.0).abs() < 1e-9);
        }
    }
}
