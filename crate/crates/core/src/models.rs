//! Ready-made models used by the examples, the CLI and the test suites.
//!
//! Unless noted otherwise the domain is `[0, 1]` with `γ ≡ 1` and `μ ≡ 1`,
//! and the fertility is scaled so that `P* = 1`.

use std::f64::consts::E;

use crate::rates::{FertilityKernel, GeneralKernel, RateSurface, VitalRates};

fn unit(gamma: RateSurface, mu: RateSurface, beta: FertilityKernel) -> VitalRates {
    VitalRates::new(gamma, mu, beta, 1.0).expect("preset rates are admissible")
}

/// `β₁ = e²·e^{−P}`, `β₂ ≡ 1`; `P* = 1` and `p*(s) = e(1 − e^{−s})`.
pub fn baseline() -> VitalRates {
    exp_fertility(1.0)
}

/// `β₁ = e^{1+k}·e^{−kP}`, `β₂ ≡ 1`. Stable for `0 < k < 1`; for `k < 0`
/// the fertility grows with crowding and an instability certificate exists.
pub fn exp_fertility(k: f64) -> VitalRates {
    unit(
        RateSurface::constant(1.0),
        RateSurface::constant(1.0),
        FertilityKernel::separable(RateSurface::exp_decay_p((1.0 + k).exp(), k), RateSurface::constant(1.0)),
    )
}

/// Crowding raises mortality: `μ = (1 + P)/2`, `β ≡ e`.
pub fn mortality_feedback() -> VitalRates {
    unit(
        RateSurface::constant(1.0),
        RateSurface::product(1.0, 0.0, 0.5, 0.5),
        FertilityKernel::separable(RateSurface::constant(E), RateSurface::constant(1.0)),
    )
}

/// Growth slows with crowding: `γ = (1 + s/2)(1.2 − 0.2P)` valid for `P < 6`,
/// fertility declining in `P` and larger individuals more fertile.
pub fn growth_feedback() -> VitalRates {
    unit(
        RateSurface::product(1.0, 0.5, 1.2, -0.2),
        RateSurface::constant(0.8),
        FertilityKernel::separable(RateSurface::exp_decay_p(6.0, 0.5), RateSurface::affine_s(0.5, 1.0)),
    )
    .with_p_max(5.0)
}

/// Offspring sizes spread around a fraction of the parent size.
pub fn offspring_spread() -> VitalRates {
    unit(
        RateSurface::constant(1.0),
        RateSurface::constant(1.0),
        FertilityKernel::general(GeneralKernel::offspring_gaussian(8.0, 0.8, 0.15, 0.2, 0.1)),
    )
}
