//! Argument-principle root counting and Newton refinement for analytic maps.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;

use super::Rectangle;
use crate::error::{Error, Result};

pub const DEFAULT_BOUNDARY_SAMPLES: usize = 256;
pub const MAX_BOUNDARY_SAMPLES: usize = 8192;
const BOUNDARY_ZERO: f64 = 1e-9;
const MAX_NEWTON_ITERATIONS: usize = 100;

/// Net phase change of `f` along the segment `a → b` (exclusive of `b`'s
/// successor), refined by doubling until every increment is below π/2.
fn segment_phase<F>(f: &F, a: Complex64, b: Complex64, n_start: usize) -> Result<f64>
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    let mut n = n_start.max(4);
    loop {
        let values: Vec<Complex64> = (0..=n)
            .into_par_iter()
            .map(|k| f(a + (b - a) * (k as f64 / n as f64)))
            .collect();
        for (k, v) in values.iter().enumerate() {
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite value on the boundary at {}",
                    a + (b - a) * (k as f64 / n as f64)
                )));
            }
            if v.norm() < BOUNDARY_ZERO {
                return Err(Error::BoundaryZero {
                    at: a + (b - a) * (k as f64 / n as f64),
                    magnitude: v.norm(),
                });
            }
        }
        let increments: Vec<f64> = values.windows(2).map(|w| (w[1] / w[0]).arg()).collect();
        if increments.iter().all(|d| d.abs() < FRAC_PI_2) {
            return Ok(increments.iter().sum());
        }
        if n >= MAX_BOUNDARY_SAMPLES {
            return Err(Error::Convergence {
                what: "boundary phase refinement".into(),
                iterations: n,
            });
        }
        n *= 2;
    }
}

/// Number of zeros of an analytic `f` inside `rect`, counted with
/// multiplicity via the argument principle. `n_boundary_samples` is the
/// starting sample count per side.
pub fn winding_count<F>(f: &F, rect: &Rectangle, n_boundary_samples: usize) -> Result<usize>
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    let corners = [
        Complex64::new(rect.re_lo, rect.im_lo),
        Complex64::new(rect.re_hi, rect.im_lo),
        Complex64::new(rect.re_hi, rect.im_hi),
        Complex64::new(rect.re_lo, rect.im_hi),
    ];
    let mut total = 0.0;
    for i in 0..4 {
        total += segment_phase(f, corners[i], corners[(i + 1) % 4], n_boundary_samples)?;
    }
    let winding = total / (2.0 * PI);
    let rounded = winding.round();
    if (winding - rounded).abs() > 0.25 || rounded < 0.0 {
        return Err(Error::Numerical(format!(
            "winding number {winding} is not a nonnegative integer; is f analytic on the rectangle?"
        )));
    }
    Ok(rounded as usize)
}

/// Newton iteration with a central-difference derivative; step-halving keeps
/// `|f|` from increasing.
pub fn refine_complex_root<F>(f: &F, z0: Complex64, tol: f64) -> Result<Complex64>
where
    F: Fn(Complex64) -> Complex64,
{
    let mut z = z0;
    let mut fz = f(z);
    for _ in 0..MAX_NEWTON_ITERATIONS {
        if fz.norm() < tol {
            return Ok(z);
        }
        let h = 1e-7 * z.norm().max(1.0);
        let deriv = (f(z + h) - f(z - h)) / (2.0 * h);
        if deriv.norm() == 0.0 || !deriv.re.is_finite() || !deriv.im.is_finite() {
            break;
        }
        let step = fz / deriv;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = z - step * scale;
            let fc = f(cand);
            if fc.re.is_finite() && fc.im.is_finite() && fc.norm() < fz.norm() {
                z = cand;
                fz = fc;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if fz.norm() < tol {
        return Ok(z);
    }
    Err(Error::Convergence { what: "complex Newton refinement".into(), iterations: MAX_NEWTON_ITERATIONS })
}
