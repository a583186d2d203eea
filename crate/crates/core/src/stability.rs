//! Linearization around an equilibrium, the positivity / stability /
//! instability conditions, the characteristic determinant for separable
//! fertility and the combined verdict.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::{apply_operator, assemble_b_p, kernel_dp_matrix, kernel_matrix, EquilibriumSolution};
use crate::error::{Error, Result};
use crate::numerics::{
    bracketed_root, cumulative_integral, dense_eigen, exp_weighted_cumulative_complex, integrate,
    refine_complex_root, winding_count, Rectangle, SizeGrid, DEFAULT_BOUNDARY_SAMPLES,
};
use crate::rates::{SampledRates, VitalRates};

/// Relative max-norm tolerance of the Jacobian cross-check.
pub const JACOBIAN_TOLERANCE: f64 = 1e-5;
/// Largest accepted distance between matrix eigenvalue and characteristic root.
pub const ROUTE_DISAGREEMENT: f64 = 0.5;
const ROOT_TOLERANCE: f64 = 1e-10;
const EXP_LIMIT: f64 = 700.0;
/// Largest tolerated rounding error of the characteristic determinant.
const DETERMINANT_NOISE: f64 = 1e-6;

/// Complex number in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for ComplexValue {
    fn from(z: Complex64) -> Self {
        Self { re: z.re, im: z.im }
    }
}

impl From<ComplexValue> for Complex64 {
    fn from(z: ComplexValue) -> Self {
        Complex64::new(z.re, z.im)
    }
}

/// Discrete linearized operator around `equilibrium`.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    pub equilibrium: EquilibriumSolution,
    /// Coefficient of the total-population feedback, from the smooth reconstruction of `p*'`.
    pub rho_star: Vec<f64>,
    /// `∫ β_P(s, z, P*) p*(z) dz` on midpoints.
    pub fertility_sensitivity: Vec<f64>,
    pub matrix: DMatrix<f64>,
    /// Max-norm gap to the finite-difference Jacobian, relative to the matrix max norm.
    pub jacobian_residual: f64,
}

/// `p*'` from the stationary equation: `(∫ β p* − (γ_s + μ) p*) / γ`.
pub fn reconstruct_derivative(rates: &VitalRates, eq: &EquilibriumSolution, grid: &SizeGrid) -> Result<Vec<f64>> {
    let sr = SampledRates::new(rates, grid, eq.pop_star);
    sr.require_positive_growth(grid)?;
    let births = crate::equilibrium::kernel_apply(&rates.beta, grid, eq.pop_star, &eq.density);
    Ok((0..grid.n_cells())
        .map(|i| (births[i] - (sr.gamma_s[i] + sr.mu[i]) * eq.density[i]) / sr.gamma[i])
        .collect())
}

/// `ρ*(s) = γ_sP p* + μ_P p* + γ_P p*'`.
pub fn compute_rho_star(rates: &VitalRates, eq: &EquilibriumSolution, grid: &SizeGrid) -> Result<Vec<f64>> {
    check_equilibrium(eq, grid)?;
    let sr = SampledRates::new(rates, grid, eq.pop_star);
    let dp = reconstruct_derivative(rates, eq, grid)?;
    Ok((0..grid.n_cells())
        .map(|i| (sr.gamma_sp[i] + sr.mu_p[i]) * eq.density[i] + sr.gamma_p[i] * dp[i])
        .collect())
}

fn check_equilibrium(eq: &EquilibriumSolution, grid: &SizeGrid) -> Result<()> {
    if eq.density.len() != grid.n_cells() {
        return Err(Error::Argument(format!(
            "equilibrium has {} cells but the grid has {}",
            eq.density.len(),
            grid.n_cells()
        )));
    }
    if !(eq.pop_star > 0.0) || eq.density.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("equilibrium must be positive and finite".into()));
    }
    Ok(())
}

/// `∫ β_P(s_i, z, P*) p*(z) dz`.
fn fertility_sensitivity(rates: &VitalRates, eq: &EquilibriumSolution, grid: &SizeGrid) -> Vec<f64> {
    let mids = grid.midpoints();
    let w = grid.weights();
    mids.iter()
        .map(|&s| mids.iter().zip(w).zip(&eq.density).map(|((&z, wz), pz)| rates.beta.dp(s, z, eq.pop_star) * wz * pz).sum())
        .collect()
}

/// Derivative of the discrete transport and mortality terms in `P`, i.e. the
/// exact counterpart of `ρ*` for the upwind scheme.
fn discrete_rho(sr: &SampledRates, weights: &[f64], p: &[f64]) -> Vec<f64> {
    let mut prev_flux = 0.0;
    (0..p.len())
        .map(|i| {
            let flux = sr.gamma_p_edges[i + 1] * p[i];
            let v = sr.mu_p[i] * p[i] + (flux - prev_flux) / weights[i];
            prev_flux = flux;
            v
        })
        .collect()
}

/// Central-difference Jacobian of `u ↦ B_{∫u} u` at `p`.
pub fn numerical_jacobian(rates: &VitalRates, grid: &SizeGrid, p: &[f64]) -> Result<DMatrix<f64>> {
    let w = grid.weights();
    let total = |u: &[f64]| u.iter().zip(w).map(|(a, b)| a * b).sum::<f64>();
    let columns: Vec<Vec<f64>> = (0..p.len())
        .into_par_iter()
        .map(|k| {
            let step = 1e-6 * p[k].abs().max(1.0);
            let mut plus = p.to_vec();
            plus[k] += step;
            let mut minus = p.to_vec();
            minus[k] -= step;
            let fp = apply_operator(rates, grid, total(&plus), &plus)?;
            let fm = apply_operator(rates, grid, total(&minus), &minus)?;
            Ok(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * step)).collect())
        })
        .collect::<Result<_>>()?;
    let n = p.len();
    Ok(DMatrix::from_fn(n, n, |i, j| columns[j][i]))
}

/// `B_{P*}` plus the rank-one feedback `(h − ρ) wᵀ`, cross-checked against a
/// finite-difference Jacobian of the discrete dynamics.
pub fn assemble_linearized(
    rates: &VitalRates,
    eq: &EquilibriumSolution,
    grid: &SizeGrid,
) -> Result<LinearizedOperator> {
    check_equilibrium(eq, grid)?;
    let rho_star = compute_rho_star(rates, eq, grid)?;
    let h = fertility_sensitivity(rates, eq, grid);
    let sr = SampledRates::new(rates, grid, eq.pop_star);
    let rho_discrete = discrete_rho(&sr, grid.weights(), &eq.density);
    let mut matrix = assemble_b_p(rates, grid, eq.pop_star)?.entries;
    let w = grid.weights();
    for i in 0..grid.n_cells() {
        let c = h[i] - rho_discrete[i];
        if c != 0.0 {
            for j in 0..grid.n_cells() {
                matrix[(i, j)] += c * w[j];
            }
        }
    }

    let numeric = numerical_jacobian(rates, grid, &eq.density)?;
    let scale = matrix.amax().max(f64::MIN_POSITIVE);
    let (mut worst, mut at) = (0.0, (0, 0));
    for j in 0..grid.n_cells() {
        for i in 0..grid.n_cells() {
            let d = (matrix[(i, j)] - numeric[(i, j)]).abs();
            if d > worst {
                worst = d;
                at = (i, j);
            }
        }
    }
    let jacobian_residual = worst / scale;
    if jacobian_residual > JACOBIAN_TOLERANCE {
        return Err(Error::Assembly {
            row: at.0,
            col: at.1,
            assembled: matrix[at],
            numerical: numeric[at],
        });
    }
    Ok(LinearizedOperator { equilibrium: eq.clone(), rho_star, fertility_sensitivity: h, matrix, jacobian_residual })
}

/// Truth value plus the quantity it was decided on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginCheck {
    pub holds: bool,
    pub margin: f64,
}

/// Lattice minimum of `β(s,y,P*) + ∫β_P(s,z,P*)p*(z)dz − ρ*(s)`.
fn recruitment_slack(rates: &VitalRates, eq: &EquilibriumSolution, grid: &SizeGrid) -> Result<(f64, Vec<f64>)> {
    check_equilibrium(eq, grid)?;
    let rho = compute_rho_star(rates, eq, grid)?;
    let h = fertility_sensitivity(rates, eq, grid);
    let b = kernel_matrix(&rates.beta, grid, eq.pop_star);
    let n = grid.n_cells();
    let mut min = f64::INFINITY;
    let mut row_max = vec![f64::NEG_INFINITY; n];
    for i in 0..n {
        for j in 0..n {
            let v = b[(i, j)] + h[i] - rho[i];
            min = min.min(v);
            row_max[i] = row_max[i].max(v);
        }
    }
    Ok((min, row_max))
}

/// `ρ*(s) ≤ β(s,y,P*) + ∫ β_P(s,z,P*) p*(z) dz` on the midpoint lattice.
/// Slack within roundoff of zero (relative `1e-9` of the kernel scale) counts as holding.
pub fn check_positivity_condition(rates: &VitalRates, eq: &EquilibriumSolution, grid: &SizeGrid) -> Result<MarginCheck> {
    let (slack, _) = recruitment_slack(rates, eq, grid)?;
    let scale = kernel_matrix(&rates.beta, grid, eq.pop_star).amax().max(1.0);
    Ok(MarginCheck { holds: slack >= -1e-9 * scale, margin: slack })
}

/// `inf μ(·,P*) > ‖sup_y (β + ∫β_P p* − ρ*)‖_∞`; the margin is the difference.
pub fn check_sufficient_stability(
    rates: &VitalRates,
    eq: &EquilibriumSolution,
    grid: &SizeGrid,
) -> Result<MarginCheck> {
    let (_, row_max) = recruitment_slack(rates, eq, grid)?;
    let sup = row_max.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let inf_mu = grid.midpoints().iter().map(|&s| rates.mu.value(s, eq.pop_star)).fold(f64::INFINITY, f64::min);
    let margin = inf_mu - sup;
    Ok(MarginCheck { holds: margin > 0.0, margin })
}

/// Real-valued phases shared by the characteristic functions: increments of
/// `Q = ∫(γ_s+μ)/γ` and `Γ = ∫1/γ` between consecutive midpoints.
#[derive(Debug, Clone)]
struct Phases {
    weights: Vec<f64>,
    q_step: Vec<f64>,
    transit_step: Vec<f64>,
    /// `Γ` at the right end of the domain.
    transit: f64,
}

impl Phases {
    fn new(sr: &SampledRates, grid: &SizeGrid) -> Result<Self> {
        let n = grid.n_cells();
        let q = cumulative_integral(&(0..n).map(|i| (sr.gamma_s[i] + sr.mu[i]) / sr.gamma[i]).collect::<Vec<_>>(), grid)?;
        let inv: Vec<f64> = sr.gamma.iter().map(|g| 1.0 / g).collect();
        let gam = cumulative_integral(&inv, grid)?;
        let step = |v: &[f64]| (0..n).map(|k| if k == 0 { 0.0 } else { v[k] - v[k - 1] }).collect::<Vec<_>>();
        Ok(Self {
            weights: grid.weights().to_vec(),
            q_step: step(&q),
            transit_step: step(&gam),
            transit: integrate(&inv, grid)?,
        })
    }

    fn check_range(&self, re_lambda: f64) -> Result<()> {
        if -re_lambda * self.transit > EXP_LIMIT {
            return Err(Error::Range(format!(
                "Re λ = {re_lambda} is too negative for the transit time {} (exponent exceeds {EXP_LIMIT})",
                self.transit
            )));
        }
        Ok(())
    }

    fn decay(&self, lambda: Complex64) -> Vec<Complex64> {
        self.q_step.iter().zip(&self.transit_step).map(|(q, t)| (-(lambda * t + q)).exp()).collect()
    }

    /// `∫_0^m ∫_0^s f(y) e^{-(M_λ(s) - M_λ(y))} dy ds` weighted by `outer(s)`.
    fn double_integral(&self, decay: &[Complex64], f: &[f64], outer: Option<&[f64]>) -> Complex64 {
        let fc: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let inner = exp_weighted_cumulative_complex(&fc, decay, &self.weights);
        inner
            .iter()
            .enumerate()
            .map(|(k, j)| j * (self.weights[k] * outer.map_or(1.0, |o| o[k])))
            .sum()
    }
}

/// Precomputed ingredients of the 2×2 characteristic determinant for a
/// separable kernel; each evaluation costs O(n) complex exponentials.
#[derive(Debug, Clone)]
pub struct CharacteristicFunction {
    phases: Phases,
    feedback: Vec<f64>,
    recruitment: Vec<f64>,
    beta2: Vec<f64>,
}

impl CharacteristicFunction {
    pub fn new(rates: &VitalRates, eq: &EquilibriumSolution, grid: &SizeGrid) -> Result<Self> {
        check_equilibrium(eq, grid)?;
        let (beta1, beta2) = rates.beta.separable_parts().ok_or_else(|| {
            Error::Route("characteristic determinant needs a separable fertility kernel".into())
        })?;
        let sr = SampledRates::new(rates, grid, eq.pop_star);
        sr.require_positive_growth(grid)?;
        let mids = grid.midpoints();
        let b2: Vec<f64> = mids.iter().map(|&y| beta2.value(y, 0.0)).collect();
        let births = integrate(&b2.iter().zip(&eq.density).map(|(b, p)| b * p).collect::<Vec<_>>(), grid)?;
        let rho = compute_rho_star(rates, eq, grid)?;
        let feedback = (0..mids.len())
            .map(|i| (beta1.dp(mids[i], eq.pop_star) * births - rho[i]) / sr.gamma[i])
            .collect();
        let recruitment = (0..mids.len()).map(|i| beta1.value(mids[i], eq.pop_star) / sr.gamma[i]).collect();
        Ok(Self { phases: Phases::new(&sr, grid)?, feedback, recruitment, beta2: b2 })
    }

    /// Transit time `Γ(m)` through the whole domain.
    pub fn transit_time(&self) -> f64 {
        self.phases.transit
    }

    /// Entries `[a₁, a₂, a₃, a₄]`.
    pub fn entries(&self, lambda: Complex64) -> Result<[Complex64; 4]> {
        self.phases.check_range(lambda.re)?;
        let decay = self.phases.decay(lambda);
        let a = [
            -self.phases.double_integral(&decay, &self.feedback, None),
            -self.phases.double_integral(&decay, &self.recruitment, None),
            -self.phases.double_integral(&decay, &self.feedback, Some(&self.beta2)),
            -self.phases.double_integral(&decay, &self.recruitment, Some(&self.beta2)),
        ];
        if a.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Range(format!("characteristic entries overflow at λ = {lambda}")));
        }
        Ok(a)
    }

    /// Fails with a range error when the products cancel so badly that rounding
    /// exceeds `DETERMINANT_NOISE`, which happens once `−Re λ·Γ(m)` reaches
    /// roughly 15.
    pub fn determinant(&self, lambda: Complex64) -> Result<Complex64> {
        let [a1, a2, a3, a4] = self.entries(lambda)?;
        let (diag, cross) = ((1.0 + a1) * (1.0 + a4), a2 * a3);
        let noise = f64::EPSILON * self.phases.weights.len() as f64 * (diag.norm() + cross.norm());
        if noise > DETERMINANT_NOISE {
            return Err(Error::Range(format!(
                "characteristic determinant at λ = {lambda} is dominated by rounding (error bound {noise:.1e})"
            )));
        }
        Ok(diag - cross)
    }
}

/// Characteristic determinant `(1+a₁)(1+a₄) − a₂a₃` at `lambda`.
pub fn char_determinant(
    rates: &VitalRates,
    eq: &EquilibriumSolution,
    grid: &SizeGrid,
    lambda: Complex64,
) -> Result<Complex64> {
    CharacteristicFunction::new(rates, eq, grid)?.determinant(lambda)
}

/// `K(λ) = ε ∫_0^m ∫_0^s e^{-(M_λ(s) − M_λ(y))} / γ(y) dy ds` for real `λ`;
/// a range error when `λ Γ(m)` is so negative that the exponentials overflow.
pub fn k_instability(rates: &VitalRates, eq: &EquilibriumSolution, grid: &SizeGrid, eps: f64, lambda: f64) -> Result<f64> {
    InstabilityFunction::new(rates, eq, grid)?.value(eps, lambda)
}

struct InstabilityFunction {
    phases: Phases,
    inv_gamma: Vec<f64>,
}

impl InstabilityFunction {
    fn new(rates: &VitalRates, eq: &EquilibriumSolution, grid: &SizeGrid) -> Result<Self> {
        check_equilibrium(eq, grid)?;
        let sr = SampledRates::new(rates, grid, eq.pop_star);
        sr.require_positive_growth(grid)?;
        Ok(Self { phases: Phases::new(&sr, grid)?, inv_gamma: sr.gamma.iter().map(|g| 1.0 / g).collect() })
    }

    fn value(&self, eps: f64, lambda: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::Argument(format!("ε must be positive, got {eps}")));
        }
        self.phases.check_range(lambda)?;
        let decay = self.phases.decay(Complex64::new(lambda, 0.0));
        let k = eps * self.phases.double_integral(&decay, &self.inv_gamma, None).re;
        if !k.is_finite() {
            return Err(Error::Range(format!("K overflows at λ = {lambda}")));
        }
        Ok(k)
    }
}

/// Evidence of linear instability: a constant lower bound `ε` on the
/// recruitment part whose comparison equation has a positive root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InstabilityCertificate {
    pub epsilon: f64,
    pub k_at_zero: f64,
    /// Positive root of `K(λ) = 1`.
    pub growth_lower_bound: f64,
}

/// Issues a certificate when `ε_max > 0` and `K(ε_max, 0) > 1`.
pub fn check_instability(
    rates: &VitalRates,
    eq: &EquilibriumSolution,
    grid: &SizeGrid,
) -> Result<Option<InstabilityCertificate>> {
    let (eps, _) = recruitment_slack(rates, eq, grid)?;
    if !(eps > 0.0) {
        return Ok(None);
    }
    let k = InstabilityFunction::new(rates, eq, grid)?;
    let k0 = k.value(eps, 0.0)?;
    if !(k0 > 1.0) {
        return Ok(None);
    }
    let mut hi = 1.0;
    while k.value(eps, hi)? >= 1.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Convergence { what: "bracketing K(λ) = 1".into(), iterations: 40 });
        }
    }
    let root = bracketed_root(|l| k.value(eps, l).map_or(f64::NAN, |v| v - 1.0), 0.0, hi, 1e-12 * hi)?;
    Ok(Some(InstabilityCertificate { epsilon: eps, k_at_zero: k0, growth_lower_bound: root }))
}

fn jittered(rect: &Rectangle, attempt: usize) -> Rectangle {
    if attempt == 0 {
        return *rect;
    }
    let s = 1e-4 * attempt as f64;
    Rectangle {
        re_lo: rect.re_lo - s * rect.width(),
        re_hi: rect.re_hi + 0.7 * s * rect.width(),
        im_lo: rect.im_lo - 0.6 * s * rect.height(),
        im_hi: rect.im_hi + 0.9 * s * rect.height(),
    }
}

const MAX_DEPTH: usize = 48;
// off-centre cuts keep the real axis and the centre away from subdivision lines
const CUTS: [(f64, f64); 3] = [(0.5137, 0.4713), (0.4621, 0.5389), (0.5473, 0.4417)];

fn locate<F>(f: &F, rect: Rectangle, count: usize, depth: usize, out: &mut Vec<Complex64>) -> Result<()>
where
    F: Fn(Complex64) -> Complex64 + Sync,
{
    if count == 0 {
        return Ok(());
    }
    let center = Complex64::new(0.5 * (rect.re_lo + rect.re_hi), 0.5 * (rect.im_lo + rect.im_hi));
    let tiny = rect.width().max(rect.height()) < 1e-9 * center.norm().max(1.0);
    if count == 1 || tiny || depth >= MAX_DEPTH {
        if let Ok(z) = refine_complex_root(f, center, ROOT_TOLERANCE) {
            let grown = rect.expanded(0.05);
            if grown.contains(z.re, z.im) {
                out.extend(std::iter::repeat_n(z, count));
                return Ok(());
            }
        }
        if tiny || depth >= MAX_DEPTH {
            return Err(Error::Convergence { what: "characteristic root refinement".into(), iterations: depth });
        }
    }
    let mut last_err = None;
    for &(fx, fy) in &CUTS {
        let parts = rect.quadrisect(fx, fy);
        let counts: Result<Vec<usize>> =
            parts.iter().map(|r| winding_count(f, r, DEFAULT_BOUNDARY_SAMPLES / 4)).collect();
        match counts {
            Ok(c) if c.iter().sum::<usize>() == count => {
                for (r, k) in parts.iter().zip(c) {
                    locate(f, *r, k, depth + 1, out)?;
                }
                return Ok(());
            }
            Ok(c) => {
                last_err = Some(Error::Numerical(format!("sub-rectangle counts {c:?} do not add up to {count}")))
            }
            Err(e @ Error::BoundaryZero { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap())
}

/// Zeros of the characteristic determinant inside `region`, sorted by
/// descending real part, with conjugate pairs made exact.
pub fn find_char_roots(
    rates: &VitalRates,
    eq: &EquilibriumSolution,
    grid: &SizeGrid,
    region: &Rectangle,
) -> Result<Vec<Complex64>> {
    let cf = CharacteristicFunction::new(rates, eq, grid)?;
    find_roots_of(&cf, region)
}

fn find_roots_of(cf: &CharacteristicFunction, region: &Rectangle) -> Result<Vec<Complex64>> {
    cf.phases.check_range(region.re_lo)?;
    let f = |z: Complex64| cf.determinant(z).unwrap_or(Complex64::new(f64::NAN, f64::NAN));
    let mut last_err = None;
    for attempt in 0..4 {
        let rect = jittered(region, attempt);
        let mut roots = Vec::new();
        let result = winding_count(&f, &rect, DEFAULT_BOUNDARY_SAMPLES)
            .and_then(|count| locate(&f, rect, count, 0, &mut roots));
        match result {
            Ok(()) => return Ok(symmetrize(roots)),
            Err(e @ Error::BoundaryZero { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap())
}

fn symmetrize(mut roots: Vec<Complex64>) -> Vec<Complex64> {
    for z in roots.iter_mut() {
        if z.im.abs() <= 1e-9 * z.norm().max(1.0) {
            z.im = 0.0;
        }
    }
    let n = roots.len();
    let mut paired = vec![false; n];
    for i in 0..n {
        if paired[i] || roots[i].im <= 0.0 {
            continue;
        }
        let target = roots[i].conj();
        let partner = (0..n)
            .filter(|&j| !paired[j] && j != i && roots[j].im < 0.0)
            .min_by(|&a, &b| (roots[a] - target).norm().total_cmp(&(roots[b] - target).norm()));
        if let Some(j) = partner {
            if (roots[j] - target).norm() <= 1e-6 * target.norm().max(1.0) {
                let avg = Complex64::new(0.5 * (roots[i].re + roots[j].re), 0.5 * (roots[i].im - roots[j].im));
                roots[i] = avg;
                roots[j] = avg.conj();
                paired[i] = true;
                paired[j] = true;
            }
        }
    }
    roots.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    roots
}

fn constant_beta2(rates: &VitalRates, grid: &SizeGrid) -> Result<f64> {
    let (_, beta2) = rates
        .beta
        .separable_parts()
        .ok_or_else(|| Error::Route("reduced characteristic equation needs a separable kernel".into()))?;
    let b0 = beta2.value(0.0, 0.0);
    let constant = grid
        .edges()
        .iter()
        .chain(grid.midpoints())
        .all(|&y| (beta2.value(y, 0.0) - b0).abs() <= 1e-14 * b0.abs().max(1.0));
    if !constant {
        return Err(Error::Route("β₂ is not constant; use the full characteristic determinant".into()));
    }
    Ok(b0)
}

/// Reduced characteristic function for constant `β₂`:
/// `∫_0^m ∫_0^s e^{-(M_λ(s) − M_λ(y))} (g γ + β₁ β₂)/γ dy ds − 1`.
pub fn reduced_char_constant_beta2(
    rates: &VitalRates,
    eq: &EquilibriumSolution,
    grid: &SizeGrid,
    lambda: f64,
) -> Result<f64> {
    let b2 = constant_beta2(rates, grid)?;
    let cf = CharacteristicFunction::new(rates, eq, grid)?;
    cf.phases.check_range(lambda)?;
    let integrand: Vec<f64> = cf.feedback.iter().zip(&cf.recruitment).map(|(g, r)| g + r * b2).collect();
    let decay = cf.phases.decay(Complex64::new(lambda, 0.0));
    Ok(cf.phases.double_integral(&decay, &integrand, None).re - 1.0)
}

/// Sufficient condition of the reduced equation: value below 1 at `λ = 0`
/// together with `g γ + β₁ β₂ ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReducedStability {
    pub value_at_zero: f64,
    pub min_recruitment: f64,
    pub positivity_holds: bool,
    pub holds: bool,
}

pub fn reduced_stability_condition(
    rates: &VitalRates,
    eq: &EquilibriumSolution,
    grid: &SizeGrid,
) -> Result<ReducedStability> {
    let b2 = constant_beta2(rates, grid)?;
    let cf = CharacteristicFunction::new(rates, eq, grid)?;
    let value_at_zero = reduced_char_constant_beta2(rates, eq, grid, 0.0)? + 1.0;
    let sr = SampledRates::new(rates, grid, eq.pop_star);
    let min_recruitment = (0..grid.n_cells())
        .map(|i| (cf.feedback[i] + cf.recruitment[i] * b2) * sr.gamma[i])
        .fold(f64::INFINITY, f64::min);
    let positivity_holds = min_recruitment >= 0.0;
    Ok(ReducedStability {
        value_at_zero,
        min_recruitment,
        positivity_holds,
        holds: positivity_holds && value_at_zero < 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralReport {
    pub grid_cells: usize,
    pub tol_verdict: f64,
    pub jacobian_residual: f64,
    pub dominant_matrix_eig: ComplexValue,
    /// Rightmost few eigenvalues of the linearized matrix.
    pub matrix_spectrum_head: Vec<ComplexValue>,
    pub char_roots: Vec<ComplexValue>,
    pub rightmost_char_root: Option<ComplexValue>,
    /// Rectangle searched for characteristic roots (separable kernels only).
    pub search_region: Option<Rectangle>,
    pub positivity_condition_holds: bool,
    pub positivity_slack: f64,
    pub sufficient_stability_holds: bool,
    pub sufficient_stability_margin: f64,
    pub instability_certificate: Option<InstabilityCertificate>,
    pub verdict: Verdict,
    pub cross_check_gap: Option<f64>,
}

/// Search rectangle `[−10/Γ(m), 2|λ_dom| + 1] × [−50, 50]`.
pub fn default_search_region(transit: f64, dominant: Complex64) -> Rectangle {
    Rectangle { re_lo: -10.0 / transit, re_hi: 2.0 * dominant.norm() + 1.0, im_lo: -50.0, im_hi: 50.0 }
}

/// Runs every check and classifies the equilibrium.
pub fn spectral_verdict(rates: &VitalRates, eq: &EquilibriumSolution, grid: &SizeGrid) -> Result<SpectralReport> {
    spectral_verdict_in(rates, eq, grid, None)
}

/// [`spectral_verdict`] with an explicit root-search rectangle.
pub fn spectral_verdict_in(
    rates: &VitalRates,
    eq: &EquilibriumSolution,
    grid: &SizeGrid,
    region: Option<Rectangle>,
) -> Result<SpectralReport> {
    let lin = assemble_linearized(rates, eq, grid)?;
    let eig = dense_eigen(&lin.matrix)?;
    let dominant = eig.dominant();
    let positivity = check_positivity_condition(rates, eq, grid)?;
    let sufficient = check_sufficient_stability(rates, eq, grid)?;
    let certificate = check_instability(rates, eq, grid)?;

    let (roots, search_region) = if rates.beta.is_separable() {
        let cf = CharacteristicFunction::new(rates, eq, grid)?;
        let rect = region.unwrap_or_else(|| default_search_region(cf.transit_time(), dominant));
        (find_roots_of(&cf, &rect)?, Some(rect))
    } else {
        (Vec::new(), None)
    };
    let rightmost = roots.first().copied();
    let cross_check_gap = rightmost.map(|r| (r - dominant).norm());
    if let (Some(gap), Some(r)) = (cross_check_gap, rightmost) {
        if gap > ROUTE_DISAGREEMENT {
            return Err(Error::Inconsistency { matrix: dominant, characteristic: r });
        }
    }

    let tol = 10.0 * grid.h_max();
    let verdict = if dominant.re > tol || certificate.is_some() {
        Verdict::Unstable
    } else if dominant.re < -tol && rightmost.is_none_or(|r| r.re < -tol) {
        Verdict::Stable
    } else {
        Verdict::Inconclusive
    };

    Ok(SpectralReport {
        grid_cells: grid.n_cells(),
        tol_verdict: tol,
        jacobian_residual: lin.jacobian_residual,
        dominant_matrix_eig: dominant.into(),
        matrix_spectrum_head: eig.values.iter().take(8).map(|&z| z.into()).collect(),
        char_roots: roots.iter().map(|&z| z.into()).collect(),
        rightmost_char_root: rightmost.map(Into::into),
        search_region,
        positivity_condition_holds: positivity.holds,
        positivity_slack: positivity.margin,
        sufficient_stability_holds: sufficient.holds,
        sufficient_stability_margin: sufficient.margin,
        instability_certificate: certificate,
        verdict,
        cross_check_gap,
    })
}

/// `P*`-sensitivity kernel `∂β/∂P` on the lattice, exposed for diagnostics.
pub fn fertility_dp_matrix(rates: &VitalRates, eq: &EquilibriumSolution, grid: &SizeGrid) -> DMatrix<f64> {
    kernel_dp_matrix(&rates.beta, grid, eq.pop_star)
}
