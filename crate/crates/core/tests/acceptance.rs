//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::f64::consts::E;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sizestruct::equilibrium::{
    assemble_b_p, dominant_eigenvalue, solve_equilibrium_general, solve_equilibrium_separable, EquilibriumSolution,
    Route,
};
use sizestruct::numerics::{dense_eigen, is_metzler, SizeGrid};
use sizestruct::rates::{FertilityKernel, GeneralKernel, RateSurface, VitalRates};
use sizestruct::simulator::{
    admissible_step, measure_growth_rate, perturb_equilibrium, simulate, step, PerturbationMode, PopulationState,
};
use sizestruct::stability::{
    assemble_linearized, char_determinant, default_search_region, find_char_roots, spectral_verdict, Verdict,
};
use sizestruct::{cli, models, Error};

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit_secs: f64) -> bool {
    elapsed.as_secs_f64() < limit_secs
}

fn baseline_grid(n: usize) -> SizeGrid {
    SizeGrid::uniform(1.0, n).unwrap()
}

fn closed_form_equilibrium() -> Outcome {
    let start = Instant::now();
    let rates = models::baseline();
    let grid = baseline_grid(1000);
    let eqs = solve_equilibrium_separable(&rates, &grid, (1e-3, 100.0)).unwrap();
    let elapsed = start.elapsed();
    let eq = &eqs[0];
    let p_err = (eq.pop_star - 1.0).abs();
    let pbar_err = (eq.p_bar_star.unwrap() - 1.0).abs();
    let profile_err = grid
        .midpoints()
        .iter()
        .zip(&eq.density)
        .map(|(s, p)| (p - E * (1.0 - (-s).exp())).abs())
        .fold(0.0, f64::max);
    let pass = eqs.len() == 1 && p_err <= 1e-5 && pbar_err <= 1e-4 && profile_err <= 1e-3 && within(elapsed, 1.0);
    outcome(
        pass,
        format!("|P*-1| = {p_err:.2e}, |P̄*-1| = {pbar_err:.2e}, max profile error {profile_err:.2e}, {elapsed:.2?}"),
    )
}

fn route_agreement() -> Outcome {
    let start = Instant::now();
    let rates = models::baseline();
    let gap = |n: usize| {
        let grid = baseline_grid(n);
        let general = solve_equilibrium_general(&rates, &grid, (1e-3, 100.0)).unwrap();
        let separable = solve_equilibrium_separable(&rates, &grid, (1e-3, 100.0)).unwrap();
        (general[0].pop_star - separable[0].pop_star).abs()
    };
    let (g200, g400) = (gap(200), gap(400));
    let elapsed = start.elapsed();
    let ratio = g200 / g400;
    let pass = g200 <= 2e-2 && (1.5..=4.0).contains(&ratio) && within(elapsed, 30.0);
    outcome(pass, format!("gap {g200:.3e} at 200 cells, {g400:.3e} at 400, ratio {ratio:.3}, {elapsed:.2?}"))
}

/// Rates without any `P` dependence have a continuum of equilibria when
/// `R ≡ 1`; the Perron vector of `B` scaled to unit mass stands in for `p*`.
fn p_independent_state(rates: &VitalRates, grid: &SizeGrid) -> EquilibriumSolution {
    let (_, v) = dominant_eigenvalue(rates, grid, 1.0).unwrap();
    let mass: f64 = v.iter().zip(grid.weights()).map(|(a, b)| a * b).sum();
    EquilibriumSolution {
        pop_star: 1.0,
        density: v.iter().map(|x| x / mass).collect(),
        p_bar_star: None,
        route: Route::General,
        residual_stationary: 0.0,
        residual_total: 0.0,
    }
}

fn jacobian_identity() -> Outcome {
    let grid = baseline_grid(200);
    let p_free = VitalRates::new(
        RateSurface::affine_s(1.0, 0.5),
        RateSurface::affine_s(0.5, 1.0),
        FertilityKernel::separable(RateSurface::constant(E), RateSurface::gaussian_s(1.0, 0.3, 0.2)),
        1.0,
    )
    .unwrap();
    let cases = [
        ("P-independent", p_independent_state(&p_free, &grid), p_free),
        ("P-dependent μ", equilibrium(&models::mortality_feedback(), &grid), models::mortality_feedback()),
        ("P-dependent β", equilibrium(&models::baseline(), &grid), models::baseline()),
        ("P-dependent γ", equilibrium(&models::growth_feedback(), &grid), models::growth_feedback()),
        ("general kernel", equilibrium(&models::offspring_spread(), &grid), models::offspring_spread()),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, eq, rates) in &cases {
        let start = Instant::now();
        let residual = match assemble_linearized(rates, eq, &grid) {
            Ok(lin) => lin.jacobian_residual,
            Err(e) => {
                pass = false;
                parts.push(format!("{name}: {e}"));
                continue;
            }
        };
        let elapsed = start.elapsed();
        pass &= residual <= 1e-5 && within(elapsed, 10.0);
        parts.push(format!("{name} {residual:.1e} ({elapsed:.2?})"));
    }
    outcome(pass, parts.join(", "))
}

fn equilibrium(rates: &VitalRates, grid: &SizeGrid) -> EquilibriumSolution {
    solve_equilibrium_general(rates, grid, (1e-3, rates.p_max)).unwrap().remove(0)
}

fn spectral_cross_check() -> Outcome {
    let start = Instant::now();
    let rates = models::baseline();
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [200, 400] {
        let grid = baseline_grid(n);
        let eq = solve_equilibrium_separable(&rates, &grid, (1e-3, 100.0)).unwrap().remove(0);
        let lin = assemble_linearized(&rates, &eq, &grid).unwrap();
        let dom = dense_eigen(&lin.matrix).unwrap().dominant();
        let tol = 5e-2f64.max(10.0 * grid.h_max());
        let region = default_search_region(rates.transit_time(&grid, eq.pop_star), dom);
        let roots = find_char_roots(&rates, &eq, &grid, &region).unwrap();
        match roots.first() {
            Some(root) => {
                let gap = (root - dom).norm();
                pass &= gap <= tol;
                parts.push(format!("n={n}: root {root:.4}, eigenvalue {dom:.4}, gap {gap:.3e} (tol {tol:.2e})"));
            }
            None => {
                pass = false;
                let at_dom = match char_determinant(&rates, &eq, &grid, dom) {
                    Ok(d) => format!("det(eigenvalue) = {d:.4}"),
                    Err(e) => format!("det(eigenvalue) unavailable: {e}"),
                };
                parts.push(format!(
                    "n={n}: no characteristic root in [{:.1}, {:.1}] x [{:.0}, {:.0}]; eigenvalue {dom:.4}; {at_dom}",
                    region.re_lo, region.re_hi, region.im_lo, region.im_hi
                ));
            }
        }
    }
    let elapsed = start.elapsed();
    pass &= within(elapsed, 60.0);
    parts.push(format!("{elapsed:.2?}"));
    outcome(pass, parts.join("; "))
}

struct DynamicsCase {
    name: &'static str,
    rates: VitalRates,
    amplitude: f64,
    t_end: f64,
    window: (f64, f64),
}

fn dynamics_consistency() -> Outcome {
    let cases = [
        DynamicsCase { name: "exp fertility k=0.5", rates: models::exp_fertility(0.5), amplitude: 0.01, t_end: 4.0, window: (1.0, 3.0) },
        DynamicsCase { name: "mortality feedback", rates: models::mortality_feedback(), amplitude: 0.01, t_end: 6.0, window: (1.5, 4.5) },
        DynamicsCase { name: "growth feedback", rates: models::growth_feedback(), amplitude: 0.01, t_end: 4.0, window: (1.0, 3.0) },
        DynamicsCase { name: "offspring spread", rates: models::offspring_spread(), amplitude: 0.01, t_end: 20.0, window: (5.0, 15.0) },
        DynamicsCase { name: "exp fertility k=-0.5", rates: models::exp_fertility(-0.5), amplitude: 0.001, t_end: 2.5, window: (1.0, 2.5) },
    ];
    let grid = baseline_grid(200);
    let tol = 0.05f64.max(10.0 * grid.h_max());
    let (mut stable, mut unstable) = (0, 0);
    let mut pass = true;
    let mut parts = Vec::new();
    for case in &cases {
        let eq = equilibrium(&case.rates, &grid);
        let report = spectral_verdict(&case.rates, &eq, &grid).unwrap();
        let p0 = perturb_equilibrium(&case.rates, &eq, &grid, case.amplitude, PerturbationMode::Uniform).unwrap();
        let state = PopulationState::new(grid.clone(), p0, 0.0).unwrap();
        let trace = simulate(&state, &case.rates, case.t_end, None).unwrap();
        let dom = report.dominant_matrix_eig;
        let (rate, oscillating) = match measure_growth_rate(&trace, eq.pop_star, case.window) {
            Ok(fit) => (fit.rate, false),
            Err(Error::Oscillation { envelope: Some(fit) }) => (fit.rate, true),
            Err(e) => {
                pass = false;
                parts.push(format!("{}: {e}", case.name));
                continue;
            }
        };
        let sign_ok = match report.verdict {
            Verdict::Stable => {
                stable += 1;
                rate < 0.0
            }
            Verdict::Unstable => {
                unstable += 1;
                rate > 0.0 && report.instability_certificate.as_ref().is_some_and(|c| c.k_at_zero > 1.0)
            }
            Verdict::Inconclusive => false,
        };
        let magnitude_ok = report.verdict != Verdict::Stable || oscillating || (rate - dom.re).abs() <= tol;
        pass &= sign_ok && magnitude_ok;
        parts.push(format!(
            "{}: {} measured {rate:.4} eigenvalue {:.4}{:+.4}i",
            case.name, report.verdict, dom.re, dom.im
        ));
    }
    pass &= stable >= 3 && unstable >= 1;
    outcome(pass, parts.join("; "))
}

fn random_rates(rng: &mut ChaCha8Rng) -> VitalRates {
    let gamma = RateSurface::product(rng.random_range(0.5..2.0), rng.random_range(0.0..1.0), rng.random_range(0.8..1.5), rng.random_range(-0.1..0.1));
    let mu = RateSurface::product(rng.random_range(0.0..2.0), rng.random_range(0.0..1.0), 1.0, rng.random_range(0.0..0.5));
    let beta = if rng.random_bool(0.5) {
        let beta2 = if rng.random_bool(0.5) {
            RateSurface::affine_s(rng.random_range(0.0..1.0), rng.random_range(0.0..2.0))
        } else {
            RateSurface::gaussian_s(rng.random_range(0.5..2.0), rng.random_range(0.0..1.0), rng.random_range(0.05..0.5))
        };
        FertilityKernel::separable(RateSurface::exp_decay_p(rng.random_range(0.5..10.0), rng.random_range(0.0..1.0)), beta2)
    } else {
        FertilityKernel::general(GeneralKernel::offspring_gaussian(
            rng.random_range(1.0..10.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..0.5),
            rng.random_range(0.1..0.9),
            rng.random_range(0.05..0.3),
        ))
    };
    VitalRates::new(gamma, mu, beta, 1.0).unwrap().with_p_max(5.0)
}

fn structural_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut metzler = 0;
    let mut real = 0;
    for _ in 0..50 {
        let rates = random_rates(&mut rng);
        let grid = SizeGrid::uniform(1.0, rng.random_range(20..80)).unwrap();
        let b = assemble_b_p(&rates, &grid, rng.random_range(0.0..5.0)).unwrap();
        metzler += is_metzler(&b.entries, 0.0) as usize;
        let dom = dense_eigen(&b.entries).unwrap().dominant();
        real += (dom.im.abs() <= 1e-8 * dom.re.abs().max(1.0)) as usize;
    }

    let mut steps = 0usize;
    let mut negative = 0usize;
    for _ in 0..100 {
        let rates = random_rates(&mut rng);
        let n = rng.random_range(20..60);
        let grid = SizeGrid::uniform(1.0, n).unwrap();
        let density: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..3.0) }).collect();
        let mut state = PopulationState::new(grid.clone(), density, 0.0).unwrap();
        for _ in 0..100 {
            let limit = admissible_step(&rates, &grid, state.total()).unwrap();
            let mut dt = rng.random_range(0.01..0.98) * limit;
            state = loop {
                match step(&state, &rates, dt) {
                    Ok(next) => break next,
                    Err(Error::StepSize { .. }) => dt *= 0.5,
                    Err(e) => panic!("{e}"),
                }
            };
            steps += 1;
            negative += state.density.iter().any(|&v| v < 0.0) as usize;
        }
    }

    let transport = VitalRates::new(
        RateSurface::affine_s(1.0, 1.0),
        RateSurface::constant(0.0),
        FertilityKernel::general(GeneralKernel::zero()),
        1.0,
    )
    .unwrap();
    let grid = baseline_grid(2000);
    let transit = transport.transit_time(&grid, 0.0);
    let state = PopulationState::new(grid.clone(), vec![1.0; 2000], 0.0).unwrap();
    let initial = state.total();
    let remaining = *simulate(&state, &transport, 1.1 * transit, None).unwrap().totals.last().unwrap() / initial;

    let pass = metzler == 50 && real == 50 && steps == 10_000 && negative == 0 && remaining <= 1e-6;
    outcome(
        pass,
        format!(
            "Metzler {metzler}/50, real dominant {real}/50, {steps} steps with {negative} negative states, \
             relative mass {remaining:.2e} after 1.1 Γ(m) on 2000 cells"
        ),
    )
}

fn kernel_pair(rng: &mut ChaCha8Rng, k: usize) -> (FertilityKernel, FertilityKernel) {
    if k.is_multiple_of(2) {
        let a = rng.random_range(0.5..8.0);
        let decay = rng.random_range(0.0..1.0);
        let beta2 = RateSurface::gaussian_s(rng.random_range(0.5..2.0), rng.random_range(0.0..1.0), rng.random_range(0.05..0.5));
        let lift = rng.random_range(0.0..1.0);
        let low = FertilityKernel::separable(RateSurface::exp_decay_p(a, decay), beta2.clone());
        let high = FertilityKernel::separable(RateSurface::exp_decay_p(a * (1.0 + lift), decay), beta2);
        (low, high)
    } else {
        let (a, kk, c, r, w) = (
            rng.random_range(1.0..8.0),
            rng.random_range(0.0..1.0),
            rng.random_range(0.0..0.5),
            rng.random_range(0.1..0.9),
            rng.random_range(0.05..0.3),
        );
        let low = GeneralKernel::offspring_gaussian(a, kk, c, r, w);
        let bump = rng.random_range(0.0..2.0);
        let base = low.clone();
        let high = GeneralKernel::custom("lifted", move |s, y, p| base.value(s, y, p) + bump * s * y, None);
        (FertilityKernel::general(low), FertilityKernel::general(high))
    }
}

fn monotone_comparison() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pass = true;
    let mut worst = f64::INFINITY;
    for k in 0..10 {
        let base = random_rates(&mut rng);
        let (low, high) = kernel_pair(&mut rng, k);
        let grid = SizeGrid::uniform(1.0, 60).unwrap();
        let p = rng.random_range(0.0..5.0);
        let mids = grid.midpoints();
        let ordered = mids.iter().all(|&s| mids.iter().all(|&y| low.value(s, y, p) <= high.value(s, y, p)));
        let (l_low, _) = dominant_eigenvalue(&base.with_beta(low), &grid, p).unwrap();
        let (l_high, _) = dominant_eigenvalue(&base.with_beta(high), &grid, p).unwrap();
        worst = worst.min(l_high - l_low);
        pass &= ordered && l_high >= l_low - 1e-9;
    }
    outcome(pass, format!("10 pairs, min λ(β⁺) − λ(β) = {worst:.3e}"))
}

fn cli_verify() -> Outcome {
    let out = tempfile::tempdir().unwrap();
    let config = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/baseline.json");
    let start = Instant::now();
    let code = cli::run(["sizestruct", "verify", "--config", config, "--out", out.path().to_str().unwrap()]);
    let elapsed = start.elapsed();
    outcome(code == 0 && within(elapsed, 120.0), format!("exit code {code}, {elapsed:.2?}"))
}

fn main() {
    // panics are reported on the criterion line
    std::panic::set_hook(Box::new(|_| {}));
    let criteria: [Criterion; 8] = [
        ("closed-form equilibrium", closed_form_equilibrium),
        ("route agreement", route_agreement),
        ("Jacobian identity", jacobian_identity),
        ("spectral cross-check", spectral_cross_check),
        ("dynamics consistency", dynamics_consistency),
        ("structural properties", structural_properties),
        ("monotone comparison", monotone_comparison),
        ("verify command", cli_verify),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
            });
        failed += !result.pass as usize;
        println!("{} criterion {} ({name}): {}", if result.pass { "PASS" } else { "FAIL" }, k + 1, result.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
