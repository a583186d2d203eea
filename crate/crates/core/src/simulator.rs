//! Explicit upwind / Heun integration of the nonlinear model and empirical
//! growth-rate measurement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::equilibrium::{apply_operator, EquilibriumSolution};
use crate::error::{Error, Result};
use crate::numerics::{dense_eigen, SizeGrid};
use crate::rates::{SampledRates, VitalRates};
use crate::stability::assemble_linearized;

/// Courant number for the transport part.
pub const CFL: f64 = 0.9;
/// Smallest automatic step before the run is declared stiff.
pub const MIN_STEP: f64 = 1e-12;
/// Largest admissible `|amplitude|` of a perturbation with unit-max shape.
pub const MAX_PERTURBATION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    pub grid: SizeGrid,
    pub density: Vec<f64>,
    pub time: f64,
}

impl PopulationState {
    pub fn new(grid: SizeGrid, density: Vec<f64>, time: f64) -> Result<Self> {
        if density.len() != grid.n_cells() {
            return Err(Error::Argument(format!(
                "density has {} values, grid has {} cells",
                density.len(),
                grid.n_cells()
            )));
        }
        if density.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Argument("density must be finite and nonnegative".into()));
        }
        Ok(Self { grid, density, time })
    }

    pub fn total(&self) -> f64 {
        total(&self.grid, &self.density)
    }
}

fn total(grid: &SizeGrid, u: &[f64]) -> f64 {
    u.iter().zip(grid.weights()).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub time: f64,
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    pub totals: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    /// `|ΔP/Δt − ½(G_n + G_{n+1})|` per step, `G` = births − deaths − outflow at `s = m`.
    pub mass_balance_residuals: Vec<f64>,
    pub final_state: Vec<f64>,
}

impl SimulationTrace {
    pub fn max_mass_balance_residual(&self) -> f64 {
        self.mass_balance_residuals.iter().fold(0.0, |m, &v| m.max(v))
    }
}

/// Time derivative of the density; `P` is recomputed from the state.
pub fn rhs(state: &PopulationState, rates: &VitalRates) -> Result<Vec<f64>> {
    apply_operator(rates, &state.grid, state.total(), &state.density)
}

/// Largest `dt` for which one forward-Euler stage keeps the density nonnegative,
/// capped by the CFL and reaction limits.
pub fn admissible_step(rates: &VitalRates, grid: &SizeGrid, p: f64) -> Result<f64> {
    let sr = SampledRates::new(rates, grid, p);
    sr.require_positive_growth(grid)?;
    let w = grid.weights();
    let mut courant = f64::INFINITY;
    let mut diagonal = 0.0f64;
    let mut max_mu = 0.0f64;
    for i in 0..grid.n_cells() {
        let out = sr.gamma_edges[i + 1] / w[i];
        courant = courant.min(CFL / out);
        diagonal = diagonal.max(out + sr.mu[i]);
        max_mu = max_mu.max(sr.mu[i]);
    }
    let reaction = if max_mu > 0.0 { CFL / max_mu } else { f64::INFINITY };
    Ok(courant.min(reaction).min(1.0 / diagonal))
}

fn heun(rates: &VitalRates, grid: &SizeGrid, u: &[f64], k1: &[f64], dt: f64) -> Result<Vec<f64>> {
    let stage: Vec<f64> = u.iter().zip(k1).map(|(a, k)| a + dt * k).collect();
    let p_stage = total(grid, &stage);
    let limit = admissible_step(rates, grid, p_stage)?;
    if dt > limit {
        return Err(Error::StepSize { dt, admissible: limit });
    }
    let k2 = apply_operator(rates, grid, p_stage, &stage)?;
    // convex combination of u and a second Euler stage; exact zeros stay zero
    Ok(u.iter()
        .zip(&stage)
        .zip(&k2)
        .map(|((a, b), k)| (0.5 * a + 0.5 * (b + dt * k)).max(0.0))
        .collect())
}

/// One Heun step; the input is left untouched.
pub fn step(state: &PopulationState, rates: &VitalRates, dt: f64) -> Result<PopulationState> {
    if !(dt > 0.0) {
        return Err(Error::Argument(format!("dt must be positive, got {dt}")));
    }
    let p = state.total();
    let limit = admissible_step(rates, &state.grid, p)?;
    if dt > limit {
        return Err(Error::StepSize { dt, admissible: limit });
    }
    let k1 = apply_operator(rates, &state.grid, p, &state.density)?;
    let density = heun(rates, &state.grid, &state.density, &k1, dt)?;
    Ok(PopulationState { grid: state.grid.clone(), density, time: state.time + dt })
}

/// Integrates from `initial` for a duration `t_end`, with snapshots every
/// `cadence` time units when given.
pub fn simulate(
    initial: &PopulationState,
    rates: &VitalRates,
    t_end: f64,
    cadence: Option<f64>,
) -> Result<SimulationTrace> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(Error::Argument(format!("t_end must be finite and nonnegative, got {t_end}")));
    }
    if let Some(c) = cadence {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Argument(format!("cadence must be positive, got {c}")));
        }
    }
    let grid = &initial.grid;
    let w = grid.weights();
    let start = initial.time;
    let finish = start + t_end;
    let mut u = initial.density.clone();
    let mut t = start;
    let mut p = total(grid, &u);
    let mut k1 = apply_operator(rates, grid, p, &u)?;
    let mut g = total(grid, &k1);

    let mut trace = SimulationTrace {
        times: vec![t],
        totals: vec![p],
        snapshots: Vec::new(),
        mass_balance_residuals: Vec::new(),
        final_state: Vec::new(),
    };
    let mut next_snapshot = cadence.map(|_| start);
    let mut snapshot_index = 0u64;
    let eps = 1e-12 * finish.abs().max(1.0);

    loop {
        if let (Some(c), Some(ts)) = (cadence, next_snapshot) {
            if t >= ts - eps {
                trace.snapshots.push(Snapshot { time: t, density: u.clone() });
                snapshot_index += 1;
                let upcoming = start + snapshot_index as f64 * c;
                next_snapshot = (upcoming <= finish + eps).then_some(upcoming);
            }
        }
        if t >= finish - eps {
            break;
        }
        let target = next_snapshot.map_or(finish, |ts| ts.min(finish));
        // headroom for the second stage, whose rates see a slightly different P
        let auto = 0.98 * admissible_step(rates, grid, p)?;
        let dt = auto.min(target - t);
        if auto < MIN_STEP {
            return Err(Error::Stiffness { time: t, dt: auto });
        }
        let next = heun(rates, grid, &u, &k1, dt)?;
        let p_next = total(grid, &next);
        if !p_next.is_finite() {
            return Err(Error::Numerical(format!("population became non-finite at t = {}", t + dt)));
        }
        let k1_next = apply_operator(rates, grid, p_next, &next)?;
        let g_next: f64 = k1_next.iter().zip(w).map(|(a, b)| a * b).sum();
        trace.mass_balance_residuals.push(((p_next - p) / dt - 0.5 * (g + g_next)).abs());
        t = if (target - t - dt).abs() <= eps { target } else { t + dt };
        u = next;
        p = p_next;
        k1 = k1_next;
        g = g_next;
        trace.times.push(t);
        trace.totals.push(p);
    }
    trace.final_state = u;
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum PerturbationMode {
    Uniform,
    FirstEigvec,
    Random { seed: u64 },
}

/// Initial density near `eq`.
///
/// `Uniform` and `Random` scale `p*` by `1 + amplitude·shape`. `FirstEigvec`
/// adds `amplitude·max(p*)·v` where `v` is the real part of the dominant
/// eigenvector of the linearized matrix with unit max norm; a multiplicative
/// version would suppress the mode near `s = 0` where `p*` vanishes.
pub fn perturb_equilibrium(
    rates: &VitalRates,
    eq: &EquilibriumSolution,
    grid: &SizeGrid,
    amplitude: f64,
    mode: PerturbationMode,
) -> Result<Vec<f64>> {
    if !(amplitude.abs() <= MAX_PERTURBATION) {
        return Err(Error::Argument(format!(
            "perturbation amplitude {amplitude} exceeds the linear-regime bound {MAX_PERTURBATION}"
        )));
    }
    let p = &eq.density;
    let clip = |v: f64| v.max(0.0);
    Ok(match mode {
        PerturbationMode::Uniform => p.iter().map(|v| clip(v * (1.0 + amplitude))).collect(),
        PerturbationMode::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut shape: Vec<f64> = p.iter().map(|_| rng.random_range(-1.0..=1.0)).collect();
            let peak = shape.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak > 0.0 {
                shape.iter_mut().for_each(|v| *v /= peak);
            }
            p.iter().zip(&shape).map(|(v, s)| clip(v * (1.0 + amplitude * s))).collect()
        }
        PerturbationMode::FirstEigvec => {
            let lin = assemble_linearized(rates, eq, grid)?;
            let eig = dense_eigen(&lin.matrix)?;
            let mut v: Vec<f64> = eig.dominant_vector.iter().map(|z| z.re).collect();
            let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if !(peak > 0.0) {
                return Err(Error::Numerical("dominant eigenvector has no real part".into()));
            }
            // orient so that a positive amplitude raises the total population
            let sign = if total(grid, &v) < 0.0 { -1.0 } else { 1.0 };
            v.iter_mut().for_each(|x| *x *= sign / peak);
            let scale = amplitude * p.iter().fold(0.0f64, |m, x| m.max(*x));
            p.iter().zip(&v).map(|(a, b)| clip(a + scale * b)).collect()
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthFit {
    pub rate: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub residual: f64,
}

fn log_linear_fit(points: &[(f64, f64)]) -> Option<GrowthFit> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (mt, my) = points.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (sxy, sxx) = points.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt).powi(2)));
    if !(sxx > 0.0) {
        return None;
    }
    let rate = sxy / sxx;
    let residual = (points.iter().map(|(t, y)| (y - my - rate * (t - mt)).powi(2)).sum::<f64>() / n).sqrt();
    Some(GrowthFit { rate, residual })
}

/// Least-squares slope of `log|P(t) − P*|` over `window`. A sign change of the
/// deviation yields an oscillation error carrying a fit through the local maxima
/// of `|P − P*|` when at least two exist.
pub fn measure_growth_rate(trace: &SimulationTrace, p_star: f64, window: (f64, f64)) -> Result<GrowthFit> {
    let (t0, t1) = window;
    if !(t1 > t0) {
        return Err(Error::Argument(format!("empty window [{t0}, {t1}]")));
    }
    let last = trace.times.last().copied().unwrap_or(f64::NEG_INFINITY);
    let first = trace.times.first().copied().unwrap_or(f64::INFINITY);
    let slack = 1e-9 * t1.abs().max(1.0);
    if first > t0 + slack || last < t1 - slack {
        return Err(Error::Argument(format!("trace [{first}, {last}] does not cover [{t0}, {t1}]")));
    }
    let dev: Vec<(f64, f64)> = trace
        .times
        .iter()
        .zip(&trace.totals)
        .filter(|(t, _)| **t >= t0 && **t <= t1)
        .map(|(t, p)| (*t, p - p_star))
        .collect();
    let peak = dev.iter().fold(0.0f64, |m, (_, d)| m.max(d.abs()));
    if !(peak > 1e-14 * p_star.abs().max(1.0)) {
        return Err(Error::Fit("deviation from the equilibrium is zero over the window".into()));
    }
    if peak > 0.1 * p_star.abs() {
        return Err(Error::Fit(format!("deviation {peak} leaves the linear regime (10% of P*)")));
    }
    let crosses = dev.windows(2).any(|w| w[0].1 * w[1].1 < 0.0);
    if crosses {
        let maxima: Vec<(f64, f64)> = (1..dev.len().saturating_sub(1))
            .filter(|&i| dev[i].1.abs() >= dev[i - 1].1.abs() && dev[i].1.abs() > dev[i + 1].1.abs())
            .map(|i| (dev[i].0, dev[i].1.abs().ln()))
            .collect();
        return Err(Error::Oscillation { envelope: log_linear_fit(&maxima) });
    }
    let points: Vec<(f64, f64)> = dev.iter().filter(|(_, d)| *d != 0.0).map(|(t, d)| (*t, d.abs().ln())).collect();
    log_linear_fit(&points).ok_or_else(|| Error::Fit("fewer than two samples in the window".into()))
}
