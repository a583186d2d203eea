//! Positive equilibria: the separable route through the net reproduction
//! function `R(P)` and the general route through the dominant eigenvalue of
//! the discretized stationary operator `B_P`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{
    bracketed_root, cumulative_integral, dense_eigen, exceeds_spectral_abscissa, exp_weighted_cumulative,
    integrate, inverse_iteration, is_metzler, metzler_spectral_abscissa, scan_points, SizeGrid,
};
use crate::rates::{FertilityKernel, RateSurface, SampledRates, VitalRates, GAMMA_FLOOR};

/// Number of samples when scanning a population range for sign changes.
pub const SCAN_SAMPLES: usize = 64;
pub const DEFAULT_P_MIN: f64 = 1e-3;
const ROOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Separable,
    General,
}

impl std::fmt::Display for Route {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Route::Separable => "separable",
            Route::General => "general",
        })
    }
}

/// A positive stationary state `(P*, p*)`.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumSolution {
    /// Total population `P*`.
    #[serde(rename = "P_star")]
    pub pop_star: f64,
    /// Density `p*` on the grid midpoints.
    #[serde(rename = "p_star")]
    pub density: Vec<f64>,
    /// `P̄* = ∫ β₂ p*`, separable route only.
    #[serde(rename = "P_bar_star")]
    pub p_bar_star: Option<f64>,
    pub route: Route,
    /// 1-norm of the discrete stationary operator applied to `p*`.
    pub residual_stationary: f64,
    /// `|∫ p* − P*|`.
    pub residual_total: f64,
}

/// Discretization of `B_P` on the grid midpoints.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub p: f64,
    pub entries: DMatrix<f64>,
}

/// `b(s_i, y_j, P)` on midpoints.
pub fn kernel_matrix(beta: &FertilityKernel, grid: &SizeGrid, p: f64) -> DMatrix<f64> {
    let mids = grid.midpoints();
    let n = mids.len();
    match beta {
        FertilityKernel::Separable { beta1, beta2 } => {
            let b1: Vec<f64> = mids.iter().map(|&s| beta1.value(s, p)).collect();
            let b2: Vec<f64> = mids.iter().map(|&y| beta2.value(y, 0.0)).collect();
            DMatrix::from_fn(n, n, |i, j| b1[i] * b2[j])
        }
        FertilityKernel::General(k) => DMatrix::from_fn(n, n, |i, j| k.value(mids[i], mids[j], p)),
    }
}

/// `∂b/∂P (s_i, y_j, P)` on midpoints.
pub fn kernel_dp_matrix(beta: &FertilityKernel, grid: &SizeGrid, p: f64) -> DMatrix<f64> {
    let mids = grid.midpoints();
    DMatrix::from_fn(mids.len(), mids.len(), |i, j| beta.dp(mids[i], mids[j], p))
}

/// `Σ_j b(s_i, y_j, P) w_j u_j`; O(n) for separable kernels.
pub fn kernel_apply(beta: &FertilityKernel, grid: &SizeGrid, p: f64, u: &[f64]) -> Vec<f64> {
    let mids = grid.midpoints();
    let w = grid.weights();
    match beta {
        FertilityKernel::Separable { beta1, beta2 } => {
            let births: f64 = mids.iter().zip(w).zip(u).map(|((&y, wj), uj)| beta2.value(y, 0.0) * wj * uj).sum();
            mids.iter().map(|&s| beta1.value(s, p) * births).collect()
        }
        FertilityKernel::General(k) if k.family() == "zero" => vec![0.0; u.len()],
        FertilityKernel::General(k) => mids
            .par_iter()
            .map(|&s| mids.iter().zip(w).zip(u).map(|((&y, wj), uj)| k.value(s, y, p) * wj * uj).sum())
            .collect(),
    }
}

/// Upwind transport `-(F_{i+1/2} - F_{i-1/2}) / w_i` with `F_{i+1/2} = γ(e_{i+1}) u_i`,
/// no inflow at `s = 0` and free outflow at `s = m`.
pub(crate) fn transport(gamma_edges: &[f64], weights: &[f64], u: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(u.len());
    let mut inflow = 0.0;
    for i in 0..u.len() {
        let outflow = gamma_edges[i + 1] * u[i];
        out.push(-(outflow - inflow) / weights[i]);
        inflow = outflow;
    }
    out
}

/// `B_P u` without forming the matrix.
pub fn apply_operator(rates: &VitalRates, grid: &SizeGrid, p: f64, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != grid.n_cells() {
        return Err(Error::Argument(format!("expected {} values, got {}", grid.n_cells(), u.len())));
    }
    let sampled = SampledRates::new(rates, grid, p);
    sampled.require_positive_growth(grid)?;
    let mut out = transport(&sampled.gamma_edges, grid.weights(), u);
    let births = kernel_apply(&rates.beta, grid, p, u);
    for i in 0..u.len() {
        out[i] += -sampled.mu[i] * u[i] + births[i];
    }
    Ok(out)
}

/// `Σ w_i |(B_P p)_i|`.
pub fn stationary_residual(rates: &VitalRates, grid: &SizeGrid, p: f64, density: &[f64]) -> Result<f64> {
    let r = apply_operator(rates, grid, p, density)?;
    Ok(r.iter().zip(grid.weights()).map(|(v, w)| v.abs() * w).sum())
}

/// `F(s,P) = exp(-∫_0^s (γ_s + μ)/γ dy)` on midpoints.
pub fn survival_factor(rates: &VitalRates, grid: &SizeGrid, p: f64) -> Result<Vec<f64>> {
    let q = log_survival(rates, grid, p)?;
    Ok(q.iter().map(|v| (-v).exp()).collect())
}

/// `Q(s) = ∫_0^s (γ_s + μ)/γ dy`.
fn log_survival(rates: &VitalRates, grid: &SizeGrid, p: f64) -> Result<Vec<f64>> {
    let sr = SampledRates::new(rates, grid, p);
    sr.require_positive_growth(grid)?;
    let integrand: Vec<f64> = (0..grid.n_cells()).map(|i| (sr.gamma_s[i] + sr.mu[i]) / sr.gamma[i]).collect();
    cumulative_integral(&integrand, grid)
}

fn separable_parts(rates: &VitalRates) -> Result<(&RateSurface, &RateSurface)> {
    rates.beta.separable_parts().ok_or_else(|| {
        Error::Route("fertility kernel is not separable; use the general route (solve_equilibrium_general)".into())
    })
}

/// `J(s) = ∫_0^s β₁(y,P)/γ(y,P) e^{-(Q(s)-Q(y))} dy`, the unnormalized stationary profile.
fn stationary_profile(rates: &VitalRates, beta1: &RateSurface, grid: &SizeGrid, p: f64) -> Result<Vec<f64>> {
    let sr = SampledRates::new(rates, grid, p);
    sr.require_positive_growth(grid)?;
    let q = log_survival(rates, grid, p)?;
    let f: Vec<f64> = grid.midpoints().iter().zip(&sr.gamma).map(|(&s, g)| beta1.value(s, p) / g).collect();
    exp_weighted_cumulative(&f, &q, grid)
}

/// Net reproduction number
/// `R(P) = ∫_0^m ∫_0^s β₁(y,P) β₂(s)/γ(s,P) exp(-∫_y^s μ/γ dz) dy ds`.
pub fn net_reproduction(rates: &VitalRates, grid: &SizeGrid, p: f64) -> Result<f64> {
    let (beta1, beta2) = separable_parts(rates)?;
    net_reproduction_with(rates, beta1, beta2, grid, p)
}

fn net_reproduction_with(
    rates: &VitalRates,
    beta1: &RateSurface,
    beta2: &RateSurface,
    grid: &SizeGrid,
    p: f64,
) -> Result<f64> {
    let sr = SampledRates::new(rates, grid, p);
    sr.require_positive_growth(grid)?;
    let mids = grid.midpoints();
    let m_phase = cumulative_integral(&sr.mu.iter().zip(&sr.gamma).map(|(m, g)| m / g).collect::<Vec<_>>(), grid)?;
    let b1: Vec<f64> = mids.iter().map(|&y| beta1.value(y, p)).collect();
    let inner = exp_weighted_cumulative(&b1, &m_phase, grid)?;
    let outer: Vec<f64> = (0..mids.len()).map(|i| beta2.value(mids[i], 0.0) / sr.gamma[i] * inner[i]).collect();
    integrate(&outer, grid)
}

/// Integral of the comparison conditions for a separable kernel `β₁ β₂`:
/// `∫_0^m β₂(s) ∫_0^s β₁(y,P)/γ(y,P) exp(-∫_y^s (γ_s+μ)/γ dz) dy ds`.
pub fn comparison_integral(
    rates: &VitalRates,
    beta1: &RateSurface,
    beta2: &RateSurface,
    grid: &SizeGrid,
    p: f64,
) -> Result<f64> {
    let profile = stationary_profile(rates, beta1, grid, p)?;
    let outer: Vec<f64> = grid.midpoints().iter().zip(&profile).map(|(&s, j)| beta2.value(s, 0.0) * j).collect();
    integrate(&outer, grid)
}

fn check_range(p_range: (f64, f64)) -> Result<()> {
    let (lo, hi) = p_range;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::Argument(format!("population range must satisfy 0 < lo < hi, got ({lo}, {hi})")));
    }
    Ok(())
}

/// Sign changes of `g` over the geometric scan of `p_range`, sampled in parallel.
fn sign_change_brackets(
    p_range: (f64, f64),
    g: impl Fn(f64) -> Result<bool> + Sync,
) -> Result<Vec<(f64, f64)>> {
    let xs = scan_points(p_range.0, p_range.1, SCAN_SAMPLES);
    let signs: Vec<bool> = xs.par_iter().map(|&x| g(x)).collect::<Result<_>>()?;
    Ok(xs
        .windows(2)
        .zip(signs.windows(2))
        .filter(|(_, s)| s[0] != s[1])
        .map(|(x, _)| (x[0], x[1]))
        .collect())
}

/// All equilibria with `R(P*) = 1` in `p_range`, ascending in `P*`.
pub fn solve_equilibrium_separable(
    rates: &VitalRates,
    grid: &SizeGrid,
    p_range: (f64, f64),
) -> Result<Vec<EquilibriumSolution>> {
    let (beta1, _) = separable_parts(rates)?;
    check_range(p_range)?;
    let excess = |p: f64| -> Result<f64> {
        let r = net_reproduction(rates, grid, p)? - 1.0;
        if !r.is_finite() {
            return Err(Error::Evaluation { at: p });
        }
        Ok(r)
    };
    let brackets = sign_change_brackets(p_range, |p| Ok(excess(p)? >= 0.0))?;
    let mut out = Vec::new();
    for (lo, hi) in brackets {
        let mut failure = None;
        let root = bracketed_root(
            |p| match excess(p) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            lo,
            hi,
            ROOT_TOL * hi.max(1.0),
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let pop = root?;
        let profile = stationary_profile(rates, beta1, grid, pop)?;
        let mass = integrate(&profile, grid)?;
        if !(mass > 0.0) {
            return Err(Error::Numerical(format!("stationary profile has no mass at P* = {pop}")));
        }
        let p_bar = pop / mass;
        let density: Vec<f64> = profile.iter().map(|j| p_bar * j).collect();
        out.push(finish_solution(rates, grid, pop, density, Some(p_bar), Route::Separable)?);
    }
    Ok(out)
}

fn finish_solution(
    rates: &VitalRates,
    grid: &SizeGrid,
    pop: f64,
    density: Vec<f64>,
    p_bar_star: Option<f64>,
    route: Route,
) -> Result<EquilibriumSolution> {
    let residual_total = (integrate(&density, grid)? - pop).abs();
    let residual_stationary = stationary_residual(rates, grid, pop, &density)?;
    Ok(EquilibriumSolution { pop_star: pop, density, p_bar_star, route, residual_stationary, residual_total })
}

/// Upwind finite-volume matrix of `B_P`.
pub fn assemble_b_p(rates: &VitalRates, grid: &SizeGrid, p: f64) -> Result<OperatorMatrix> {
    let sr = SampledRates::new(rates, grid, p);
    sr.require_positive_growth(grid)?;
    let w = grid.weights();
    let mut a = kernel_matrix(&rates.beta, grid, p);
    for j in 0..grid.n_cells() {
        for i in 0..grid.n_cells() {
            a[(i, j)] *= w[j];
        }
    }
    for i in 0..grid.n_cells() {
        a[(i, i)] += -sr.gamma_edges[i + 1] / w[i] - sr.mu[i];
        if i + 1 < grid.n_cells() {
            a[(i + 1, i)] += sr.gamma_edges[i + 1] / w[i + 1];
        }
    }
    Ok(OperatorMatrix { p, entries: a })
}

/// Rightmost eigenvalue of `a`, real by Perron–Frobenius when `a` is Metzler.
pub(crate) fn rightmost_real_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    let eig = dense_eigen(a)?;
    if is_metzler(a, 1e-12) {
        return Ok(metzler_spectral_abscissa(a, Some(&eig.values)));
    }
    let dom = eig.dominant();
    if dom.im.abs() > 1e-8 {
        return Err(Error::SpectralAnomaly { dominant: dom, head: eig.values.iter().take(10).copied().collect() });
    }
    Ok(dom.re)
}

/// Normalizes a real eigenvector to `Σ w x = 1` and clears roundoff negatives.
fn positive_eigenvector(v: &[Complex64], grid: &SizeGrid) -> Result<Vec<f64>> {
    let mut x: Vec<f64> = v.iter().map(|z| z.re).collect();
    let total: f64 = x.iter().zip(grid.weights()).map(|(a, w)| a * w).sum();
    if !(total.abs() > 0.0) || !total.is_finite() {
        return Err(Error::Numerical("dominant eigenvector has zero integral".into()));
    }
    for a in x.iter_mut() {
        *a /= total;
    }
    let peak = x.iter().cloned().fold(0.0, f64::max);
    if let Some(bad) = x.iter().find(|&&a| a < -1e-6 * peak) {
        return Err(Error::Numerical(format!("dominant eigenvector is not of one sign (entry {bad})")));
    }
    for a in x.iter_mut() {
        if *a < 0.0 {
            *a = 0.0;
        }
    }
    Ok(x)
}

/// Dominant eigenvalue `λ_P` of the discretized `B_P` and its eigenvector,
/// normalized to unit integral.
pub fn dominant_eigenvalue(rates: &VitalRates, grid: &SizeGrid, p: f64) -> Result<(f64, Vec<f64>)> {
    let b = assemble_b_p(rates, grid, p)?;
    let lambda = rightmost_real_eigenvalue(&b.entries)?;
    let v = inverse_iteration(&b.entries, Complex64::new(lambda, 0.0))?;
    Ok((lambda, positive_eigenvector(&v, grid)?))
}

/// Equilibria as the zeros of `P ↦ λ_P`, ascending in `P*`.
pub fn solve_equilibrium_general(
    rates: &VitalRates,
    grid: &SizeGrid,
    p_range: (f64, f64),
) -> Result<Vec<EquilibriumSolution>> {
    check_range(p_range)?;
    // sign of λ_P from the M-matrix test alone
    let brackets = sign_change_brackets(p_range, |p| {
        let b = assemble_b_p(rates, grid, p)?;
        Ok(!exceeds_spectral_abscissa(&b.entries, 0.0))
    })?;
    let mut out = Vec::new();
    for (lo, hi) in brackets {
        let mut failure = None;
        let root = bracketed_root(
            |p| match assemble_b_p(rates, grid, p).and_then(|b| rightmost_real_eigenvalue(&b.entries)) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            },
            lo,
            hi,
            ROOT_TOL * hi.max(1.0),
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let pop = root?;
        let (_, v) = dominant_eigenvalue(rates, grid, pop)?;
        let density: Vec<f64> = v.iter().map(|x| x * pop).collect();
        out.push(finish_solution(rates, grid, pop, density, None, Route::General)?);
    }
    Ok(out)
}

/// Separable kernel `β₁ β₂` used as a lower or upper comparison.
#[derive(Debug, Clone)]
pub struct ComparisonKernel {
    pub beta1: RateSurface,
    pub beta2: RateSurface,
    pub p: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Condition {
    pub holds: bool,
    pub value: f64,
    pub note: String,
}

impl Condition {
    fn new(holds: bool, value: f64, note: impl Into<String>) -> Self {
        Self { holds, value, note: note.into() }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub lower_dominated: Condition,
    pub lower_integral: Condition,
    pub upper_dominates: Condition,
    pub upper_integral: Condition,
}

impl ComparisonReport {
    pub fn holds(&self) -> bool {
        self.lower_dominated.holds && self.lower_integral.holds && self.upper_dominates.holds && self.upper_integral.holds
    }
}

/// Which sufficient conditions for a positive equilibrium hold numerically.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionsReport {
    /// `β(s,y,0) > μ(s,0)` on a lattice; value is the smallest margin.
    pub fertility_exceeds_mortality: Condition,
    /// `∫_0^m exp(-∫_0^s μ/γ(·,0)) ds < m − 1`, evaluated literally.
    pub survival_integral: Condition,
    /// `∫ β₁(s, P_max) ds` small relative to `∫ β₁(s, 0) ds`; separable only.
    pub beta1_mass_decay: Option<Condition>,
    /// Smallest sampled growth rate against the floor.
    pub growth_floor: Condition,
    pub comparison: Option<ComparisonReport>,
}

impl ConditionsReport {
    pub fn separable_conditions_hold(&self) -> bool {
        self.fertility_exceeds_mortality.holds
            && self.survival_integral.holds
            && self.beta1_mass_decay.as_ref().is_some_and(|c| c.holds)
            && self.growth_floor.holds
    }
}

const LATTICE: usize = 30;
const MASS_DECAY_RATIO: f64 = 1e-6;

fn lattice(hi: f64) -> impl Iterator<Item = f64> + Clone {
    (0..LATTICE).map(move |i| hi * i as f64 / (LATTICE - 1) as f64)
}

/// Evaluates the existence hypotheses; `lower`/`upper` enable the comparison
/// checks of the general theory. Never fails on a violated hypothesis.
pub fn check_existence_conditions(
    rates: &VitalRates,
    grid: &SizeGrid,
    lower: Option<&ComparisonKernel>,
    upper: Option<&ComparisonKernel>,
) -> Result<ConditionsReport> {
    let m = rates.m;
    let mut margin = f64::INFINITY;
    for s in lattice(m) {
        for y in lattice(m) {
            margin = margin.min(rates.beta.value(s, y, 0.0) - rates.mu.value(s, 0.0));
        }
    }
    let fertility_exceeds_mortality = Condition::new(margin > 0.0, margin, "min over lattice of β(s,y,0) − μ(s,0)");

    let sr = SampledRates::new(rates, grid, 0.0);
    let ratio: Vec<f64> = sr.mu.iter().zip(&sr.gamma).map(|(mu, g)| mu / g).collect();
    let surv: Vec<f64> = cumulative_integral(&ratio, grid)?.iter().map(|c| (-c).exp()).collect();
    let survival = integrate(&surv, grid)?;
    let survival_integral =
        Condition::new(survival < m - 1.0, survival, format!("compared against m − 1 = {}", m - 1.0));

    let beta1_mass_decay = match rates.beta.separable_parts() {
        Some((beta1, _)) => {
            let mass = |p: f64| integrate(&grid.sample(|s| beta1.value(s, p)), grid);
            let (m0, m_max) = (mass(0.0)?, mass(rates.p_max)?);
            Some(Condition::new(
                m_max <= MASS_DECAY_RATIO * m0.abs(),
                m_max,
                format!("∫β₁(s, {}) ds against {MASS_DECAY_RATIO:e} × ∫β₁(s, 0) ds = {m0}", rates.p_max),
            ))
        }
        None => None,
    };

    let mut g_min = f64::INFINITY;
    for s in lattice(m) {
        for p in lattice(rates.p_max) {
            g_min = g_min.min(rates.gamma.value(s, p));
        }
    }
    let growth_floor = Condition::new(g_min >= GAMMA_FLOOR, g_min, "min over lattice of γ(s,P)");

    let comparison = match (lower, upper) {
        (Some(lo), Some(hi)) => Some(comparison_report(rates, grid, lo, hi)?),
        (None, None) => None,
        _ => return Err(Error::Argument("comparison needs both a lower and an upper kernel".into())),
    };

    Ok(ConditionsReport { fertility_exceeds_mortality, survival_integral, beta1_mass_decay, growth_floor, comparison })
}

fn comparison_report(
    rates: &VitalRates,
    grid: &SizeGrid,
    lower: &ComparisonKernel,
    upper: &ComparisonKernel,
) -> Result<ComparisonReport> {
    let m = rates.m;
    let mut lo_gap = f64::INFINITY;
    let mut hi_gap = f64::INFINITY;
    for s in lattice(m) {
        for y in lattice(m) {
            let b_lo = rates.beta.value(s, y, lower.p);
            let b_hi = rates.beta.value(s, y, upper.p);
            lo_gap = lo_gap.min(b_lo - lower.beta1.value(s, lower.p) * lower.beta2.value(y, 0.0));
            hi_gap = hi_gap.min(upper.beta1.value(s, upper.p) * upper.beta2.value(y, 0.0) - b_hi);
        }
    }
    let tol = 1e-12;
    let lo_int = comparison_integral(rates, &lower.beta1, &lower.beta2, grid, lower.p)?;
    let hi_int = comparison_integral(rates, &upper.beta1, &upper.beta2, grid, upper.p)?;
    Ok(ComparisonReport {
        lower_dominated: Condition::new(lo_gap >= -tol, lo_gap, "min of β − β⁻ at P⁻"),
        lower_integral: Condition::new(lo_int > 1.0, lo_int, "must exceed 1"),
        upper_dominates: Condition::new(hi_gap >= -tol, hi_gap, "min of β⁺ − β at P⁺"),
        upper_integral: Condition::new(hi_int < 1.0, hi_int, "must be below 1"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::GeneralKernel;
    use std::f64::consts::E;

    fn baseline_with(a: f64) -> VitalRates {
        VitalRates::new(
            RateSurface::constant(1.0),
            RateSurface::constant(1.0),
            FertilityKernel::separable(RateSurface::exp_decay_p(a, 1.0), RateSurface::constant(1.0)),
            1.0,
        )
        .unwrap()
    }

    fn grid(n: usize) -> SizeGrid {
        SizeGrid::uniform(1.0, n).unwrap()
    }

    #[test]
    fn survival_examples() {
        let g = grid(1000);
        let f = survival_factor(&baseline_with(E * E), &g, 0.7).unwrap();
        // value at the last midpoint, extrapolated half a cell
        let f_end = f[999] * (-0.0005f64).exp();
        assert!((f_end - (-1.0f64).exp()).abs() < 1e-6);

        let mut r = baseline_with(E * E);
        r.mu = RateSurface::constant(0.0);
        assert!(survival_factor(&r, &g, 1.0).unwrap().iter().all(|&v| v == 1.0));

        r.gamma = RateSurface::affine_s(1.0, 1.0);
        let f = survival_factor(&r, &g, 1.0).unwrap();
        for (s, v) in g.midpoints().iter().zip(&f) {
            assert!((v - 1.0 / (1.0 + s)).abs() < 1e-6);
        }
    }

    #[test]
    fn growth_floor_is_a_model_error() {
        let mut r = baseline_with(1.0);
        r.gamma = RateSurface::affine_s(0.5, -1.0);
        assert!(matches!(survival_factor(&r, &grid(20), 1.0), Err(Error::Model(_))));
        assert!(matches!(assemble_b_p(&r, &grid(20), 1.0), Err(Error::Model(_))));
    }

    #[test]
    fn net_reproduction_examples() {
        let g = grid(1000);
        let r = baseline_with(E * E);
        assert!((net_reproduction(&r, &g, 1.0).unwrap() - 1.0).abs() < 1e-5);
        for p in [0.0, 0.5, 3.0] {
            assert!((net_reproduction(&r, &g, p).unwrap() - (1.0 - p).exp()).abs() < 1e-5);
        }
        let zero = baseline_with(0.0);
        assert_eq!(net_reproduction(&zero, &g, 1.0).unwrap(), 0.0);
        let doubled = baseline_with(2.0 * E * E);
        let (r1, r2) = (net_reproduction(&r, &g, 0.4).unwrap(), net_reproduction(&doubled, &g, 0.4).unwrap());
        assert!((r2 - 2.0 * r1).abs() < 1e-12 * r2);

        let general = r.with_beta(FertilityKernel::general(GeneralKernel::constant(1.0)));
        assert!(matches!(net_reproduction(&general, &g, 1.0), Err(Error::Route(_))));
    }

    #[test]
    fn separable_baseline_equilibrium() {
        let g = grid(1000);
        let sols = solve_equilibrium_separable(&baseline_with(E * E), &g, (1e-3, 100.0)).unwrap();
        assert_eq!(sols.len(), 1);
        let s = &sols[0];
        assert!((s.pop_star - 1.0).abs() < 1e-6);
        assert!((s.p_bar_star.unwrap() - 1.0).abs() < 1e-5);
        for (x, p) in g.midpoints().iter().zip(&s.density) {
            assert!((p - E * (1.0 - (-x).exp())).abs() < 1e-4);
        }
        assert!(s.residual_total <= 1e-8 * s.pop_star);
        assert!(s.density.iter().all(|&p| p >= 0.0));

        let sols = solve_equilibrium_separable(&baseline_with(E.powi(3)), &g, (1e-3, 100.0)).unwrap();
        assert_eq!(sols.len(), 1);
        assert!((sols[0].pop_star - 2.0).abs() < 1e-6);

        assert!(solve_equilibrium_separable(&baseline_with(0.0), &g, (1e-3, 100.0)).unwrap().is_empty());
    }

    #[test]
    fn stationary_residual_shrinks_with_h() {
        let r = baseline_with(E * E);
        let res: Vec<f64> = [100, 200, 400]
            .iter()
            .map(|&n| solve_equilibrium_separable(&r, &grid(n), (1e-3, 100.0)).unwrap()[0].residual_stationary)
            .collect();
        assert!(res[1] < 0.6 * res[0] && res[2] < 0.6 * res[1], "{res:?}");
        assert!(res[0] < 1.0 / 100.0 * 5.0);
    }

    #[test]
    fn first_cell_tends_to_zero() {
        let r = baseline_with(E * E);
        let first = |n| solve_equilibrium_separable(&r, &grid(n), (1e-3, 100.0)).unwrap()[0].density[0];
        assert!(first(400) < 0.6 * first(200));
    }

    #[test]
    fn operator_structure() {
        let mut r = baseline_with(0.0);
        r.mu = RateSurface::constant(0.0);
        let g = grid(10);
        let b = assemble_b_p(&r, &g, 1.0).unwrap().entries;
        for i in 0..10 {
            for j in 0..10 {
                let expected = if i == j {
                    -10.0
                } else if i == j + 1 {
                    10.0
                } else {
                    0.0
                };
                assert!((b[(i, j)] - expected).abs() < 1e-12);
            }
        }
        r.mu = RateSurface::constant(0.3);
        let b2 = assemble_b_p(&r, &g, 1.0).unwrap().entries;
        for i in 0..10 {
            assert!((b2[(i, i)] - b[(i, i)] + 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn matrix_and_matrix_free_operator_agree() {
        let r = baseline_with(E * E).with_beta(FertilityKernel::general(GeneralKernel::offspring_gaussian(
            3.0, 0.5, 0.1, 0.3, 0.2,
        )));
        let g = grid(30);
        let u = g.sample(|s| 1.0 + s.sin());
        let b = assemble_b_p(&r, &g, 1.3).unwrap().entries;
        let direct = apply_operator(&r, &g, 1.3, &u).unwrap();
        let via = &b * nalgebra::DVector::from_vec(u.clone());
        for (x, y) in direct.iter().zip(via.iter()) {
            assert!((x - y).abs() < 1e-10 * x.abs().max(1.0));
        }
    }

    #[test]
    fn dominant_eigenvalue_examples() {
        let r = baseline_with(E * E);
        let g = grid(200);
        let (l1, v) = dominant_eigenvalue(&r, &g, 1.0).unwrap();
        assert!(l1.abs() <= 5e-2, "{l1}");
        assert!(v.iter().all(|&x| x >= -1e-9));
        assert!((integrate(&v, &g).unwrap() - 1.0).abs() < 1e-12);
        let (l3, _) = dominant_eigenvalue(&r, &g, 3.0).unwrap();
        assert!(l3 < 0.0);

        let mut dead = baseline_with(0.0);
        dead.mu = RateSurface::constant(0.7);
        let (l, _) = dominant_eigenvalue(&dead, &g, 1.0).unwrap();
        assert!(l <= -0.7 + 1e-9);
    }

    #[test]
    fn general_route_baseline() {
        let r = baseline_with(E * E);
        let sols = solve_equilibrium_general(&r, &grid(200), (1e-3, 100.0)).unwrap();
        assert_eq!(sols.len(), 1);
        let s = &sols[0];
        assert!((s.pop_star - 1.0).abs() < 2e-2, "{}", s.pop_star);
        assert!(s.residual_total <= 1e-8 * s.pop_star);
        assert!(s.density.iter().all(|&p| p >= 0.0));
        assert!(s.residual_stationary < 1e-8);

        assert!(solve_equilibrium_general(&baseline_with(0.0), &grid(50), (1e-3, 100.0)).unwrap().is_empty());
    }

    #[test]
    fn enlarging_fertility_raises_lambda() {
        let g = grid(60);
        let r = baseline_with(E * E);
        let bigger = r.with_beta(FertilityKernel::separable(
            RateSurface::exp_decay_p(E * E, 1.0),
            RateSurface::affine_s(1.0, 0.5),
        ));
        for p in [0.2, 1.0, 4.0] {
            let (a, _) = dominant_eigenvalue(&r, &g, p).unwrap();
            let (b, _) = dominant_eigenvalue(&bigger, &g, p).unwrap();
            assert!(b >= a - 1e-10, "P={p}: {a} vs {b}");
        }
    }

    #[test]
    fn comparison_conditions_on_baseline() {
        let r = baseline_with(E * E);
        let g = grid(1000);
        let (b1, b2) = r.beta.separable_parts().unwrap();
        let lower = ComparisonKernel { beta1: b1.clone(), beta2: b2.clone(), p: 0.5 };
        let upper = ComparisonKernel { beta1: b1.clone(), beta2: b2.clone(), p: 2.0 };
        let rep = check_existence_conditions(&r, &g, Some(&lower), Some(&upper)).unwrap();
        let c = rep.comparison.as_ref().unwrap();
        assert!((c.lower_integral.value - 0.5f64.exp()).abs() < 1e-5);
        assert!((c.upper_integral.value - (-1.0f64).exp()).abs() < 1e-5);
        assert!(c.holds());
        assert!(rep.fertility_exceeds_mortality.holds);

        let dead = baseline_with(0.0);
        let (b1, b2) = dead.beta.separable_parts().unwrap();
        let lower = ComparisonKernel { beta1: b1.clone(), beta2: b2.clone(), p: 0.5 };
        let rep = check_existence_conditions(&dead, &g, Some(&lower), Some(&upper)).unwrap();
        assert!(!rep.comparison.unwrap().lower_integral.holds);
    }

    #[test]
    fn fertility_beats_zero_mortality() {
        let mut r = baseline_with(1.0);
        r.mu = RateSurface::constant(0.0);
        r.beta = FertilityKernel::general(GeneralKernel::constant(1.0));
        let rep = check_existence_conditions(&r, &grid(50), None, None).unwrap();
        assert!(rep.fertility_exceeds_mortality.holds);
        assert!(rep.beta1_mass_decay.is_none());
    }

    #[test]
    fn comparison_integral_matches_r_for_affine_growth() {
        let mut r = baseline_with(E * E);
        r.gamma = RateSurface::affine_s(1.0, 0.8);
        let g = grid(400);
        let (b1, b2) = r.beta.separable_parts().unwrap();
        let a = comparison_integral(&r, b1, b2, &g, 0.9).unwrap();
        let b = net_reproduction(&r, &g, 0.9).unwrap();
        assert!((a - b).abs() < 1e-4 * b, "{a} vs {b}");
    }
}
