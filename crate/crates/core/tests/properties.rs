use proptest::prelude::*;

use sizestruct::config::RunConfig;
use sizestruct::equilibrium::{apply_operator, assemble_b_p, dominant_eigenvalue, kernel_apply, net_reproduction};
use sizestruct::numerics::{is_metzler, SizeGrid};
use sizestruct::rates::{FertilityKernel, GeneralKernel, RateSurface, VitalRates};
use sizestruct::simulator::{admissible_step, measure_growth_rate, step, PopulationState, SimulationTrace};

#[derive(Debug, Clone)]
struct Params {
    gamma: (f64, f64, f64),
    mu: (f64, f64, f64),
    beta1: (f64, f64),
    beta2: (f64, f64),
    general: Option<(f64, f64, f64, f64, f64)>,
}

fn params() -> impl Strategy<Value = Params> {
    (
        (0.3..2.0f64, 0.0..1.0f64, -0.1..0.1f64),
        (0.0..2.0f64, 0.0..1.0f64, 0.0..0.5f64),
        (0.1..10.0f64, 0.0..1.0f64),
        (0.0..1.0f64, 0.0..2.0f64),
        prop::option::of((0.5..8.0f64, 0.0..1.0f64, 0.0..0.5f64, 0.1..0.9f64, 0.05..0.3f64)),
    )
        .prop_map(|(gamma, mu, beta1, beta2, general)| Params { gamma, mu, beta1, beta2, general })
}

impl Params {
    fn rates(&self) -> VitalRates {
        let beta = match self.general {
            Some((a, k, c, r, w)) => FertilityKernel::general(GeneralKernel::offspring_gaussian(a, k, c, r, w)),
            None => FertilityKernel::separable(
                RateSurface::exp_decay_p(self.beta1.0, self.beta1.1),
                RateSurface::affine_s(self.beta2.0, self.beta2.1),
            ),
        };
        VitalRates::new(
            RateSurface::product(self.gamma.0, self.gamma.1, 1.0, self.gamma.2),
            RateSurface::product(self.mu.0, self.mu.1, 1.0, self.mu.2),
            beta,
            1.0,
        )
        .unwrap()
        .with_p_max(5.0)
    }
}

fn density(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0..3.0f64], n)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn operator_is_metzler(p in params(), n in 8usize..60, pop in 0.0..5.0f64) {
        let grid = SizeGrid::uniform(1.0, n).unwrap();
        let b = assemble_b_p(&p.rates(), &grid, pop).unwrap();
        prop_assert!(is_metzler(&b.entries, 0.0));
    }

    #[test]
    fn mass_changes_by_births_deaths_and_outflow(p in params(), u in density(30)) {
        let rates = p.rates();
        let grid = SizeGrid::uniform(1.0, 30).unwrap();
        let w = grid.weights();
        let pop: f64 = u.iter().zip(w).map(|(a, b)| a * b).sum();
        let du = apply_operator(&rates, &grid, pop, &u).unwrap();
        let change: f64 = du.iter().zip(w).map(|(a, b)| a * b).sum();
        let births: f64 = kernel_apply(&rates.beta, &grid, pop, &u).iter().zip(w).map(|(a, b)| a * b).sum();
        let mids = grid.midpoints();
        let deaths: f64 = (0..30).map(|i| rates.mu.value(mids[i], pop) * u[i] * w[i]).sum();
        let outflow = rates.gamma.value(1.0, pop) * u[29];
        let scale = 1.0 + births.abs() + deaths.abs() + outflow.abs();
        prop_assert!((change - (births - deaths - outflow)).abs() <= 1e-10 * scale);
    }

    #[test]
    fn admissible_steps_keep_density_nonnegative(p in params(), u in density(25), frac in 0.01..0.95f64) {
        let rates = p.rates();
        let grid = SizeGrid::uniform(1.0, 25).unwrap();
        let state = PopulationState::new(grid.clone(), u, 0.0).unwrap();
        let dt = frac * admissible_step(&rates, &grid, state.total()).unwrap();
        if let Ok(next) = step(&state, &rates, dt) {
            prop_assert!(next.density.iter().all(|&v| v >= 0.0));
            prop_assert!((next.time - dt).abs() <= 1e-15);
        }
    }

    #[test]
    fn more_fertility_never_lowers_the_growth_bound(p in params(), lift in 1.0..3.0f64, pop in 0.0..5.0f64) {
        let rates = p.rates();
        let scaled = match &rates.beta {
            FertilityKernel::Separable { beta1, beta2 } => {
                let base = beta1.clone();
                FertilityKernel::separable(RateSurface::custom("lifted", move |s, q| lift * base.value(s, q)), beta2.clone())
            }
            FertilityKernel::General(k) => {
                let base = k.clone();
                FertilityKernel::general(GeneralKernel::custom("lifted", move |s, y, q| lift * base.value(s, y, q), None))
            }
        };
        let grid = SizeGrid::uniform(1.0, 30).unwrap();
        let (low, _) = dominant_eigenvalue(&rates, &grid, pop).unwrap();
        let (high, _) = dominant_eigenvalue(&rates.with_beta(scaled), &grid, pop).unwrap();
        prop_assert!(high >= low - 1e-9);
    }

    #[test]
    fn net_reproduction_is_linear_in_fertility(p in params(), c in 0.1..5.0f64, pop in 0.0..5.0f64) {
        let mut p = p;
        p.general = None;
        let rates = p.rates();
        let grid = SizeGrid::uniform(1.0, 50).unwrap();
        let r = net_reproduction(&rates, &grid, pop).unwrap();
        let mut q = p.clone();
        q.beta1.0 *= c;
        let rc = net_reproduction(&q.rates(), &grid, pop).unwrap();
        prop_assert!(r >= 0.0);
        prop_assert!((rc - c * r).abs() <= 1e-10 * rc.abs().max(1.0));
    }

    #[test]
    fn growth_fit_recovers_exponential_rates(rate in -3.0..3.0f64, amp in 1e-6..1e-3f64, sign in prop::bool::ANY) {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.02).collect();
        let sgn = if sign { 1.0 } else { -1.0 };
        let totals = times.iter().map(|t| 2.0 + sgn * amp * (rate * t).exp()).collect();
        let trace = SimulationTrace {
            times,
            totals,
            snapshots: Vec::new(),
            mass_balance_residuals: Vec::new(),
            final_state: Vec::new(),
        };
        let fit = measure_growth_rate(&trace, 2.0, (0.2, 1.8)).unwrap();
        prop_assert!((fit.rate - rate).abs() <= 1e-6);
    }

    #[test]
    fn numeric_overrides_round_trip(a in 0.1..50.0f64, m in 0.5..4.0f64) {
        let cfg = RunConfig::baseline(40);
        let changed = cfg.with_number("model.beta.beta1.params.a", a).unwrap().with_number("grid.m", m).unwrap();
        prop_assert_eq!(changed.number_at("model.beta.beta1.params.a").unwrap(), a);
        prop_assert_eq!(changed.number_at("grid.m").unwrap(), m);
        let back = RunConfig::from_json(&serde_json::to_string(&changed).unwrap()).unwrap();
        prop_assert_eq!(back.hash(), changed.hash());
    }
}
