//! Midpoint-rule quadrature on a [`SizeGrid`].
//!
//! Cumulative integrals are evaluated at the cell midpoints: the running sum
//! of the completed cells plus half of the current one.

use num_complex::Complex64;

use super::SizeGrid;
use crate::error::{Error, Result};

fn check_len(len: usize, grid: &SizeGrid) -> Result<()> {
    if len != grid.n_cells() {
        return Err(Error::Argument(format!(
            "expected {} values on the grid, got {len}",
            grid.n_cells()
        )));
    }
    Ok(())
}

/// `Σ weights[i] * values[i]`.
pub fn integrate(values: &[f64], grid: &SizeGrid) -> Result<f64> {
    check_len(values.len(), grid)?;
    Ok(values.iter().zip(grid.weights()).map(|(v, w)| v * w).sum())
}

/// Running integral `I[k] ≈ ∫_0^{midpoint[k]} f`.
pub fn cumulative_integral(values: &[f64], grid: &SizeGrid) -> Result<Vec<f64>> {
    check_len(values.len(), grid)?;
    let mut out = Vec::with_capacity(values.len());
    let mut closed = 0.0;
    for (v, w) in values.iter().zip(grid.weights()) {
        out.push(closed + 0.5 * w * v);
        closed += w * v;
    }
    Ok(out)
}

/// Discrete Volterra integral `J(s_k) = ∫_0^{s_k} f(y) exp(-(M(s_k) - M(y))) dy`
/// where `M` is sampled on the midpoints (usually a cumulative integral).
///
/// Computed as the midpoint sum `Σ_{j<k} w_j f_j e^{-(M_k - M_j)} + w_k f_k / 2`
/// through the equivalent O(n) recursion, so only exponentials of increments
/// appear.
pub fn exp_weighted_cumulative(f: &[f64], phase: &[f64], grid: &SizeGrid) -> Result<Vec<f64>> {
    check_len(f.len(), grid)?;
    check_len(phase.len(), grid)?;
    let w = grid.weights();
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.5 * w[0] * f[0];
    out.push(acc);
    for k in 1..f.len() {
        let decay = (-(phase[k] - phase[k - 1])).exp();
        acc = (acc + 0.5 * w[k - 1] * f[k - 1]) * decay + 0.5 * w[k] * f[k];
        out.push(acc);
    }
    Ok(out)
}

/// Complex counterpart of [`exp_weighted_cumulative`] taking the per-cell
/// decay factors `e^{-(M_k - M_{k-1})}` directly (entry 0 is ignored).
pub fn exp_weighted_cumulative_complex(
    f: &[Complex64],
    decay: &[Complex64],
    weights: &[f64],
) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(f.len());
    if f.is_empty() {
        return out;
    }
    let mut acc = f[0] * (0.5 * weights[0]);
    out.push(acc);
    for k in 1..f.len() {
        acc = (acc + f[k - 1] * (0.5 * weights[k - 1])) * decay[k] + f[k] * (0.5 * weights[k]);
        out.push(acc);
    }
    out
}
