//! Vital rates: growth γ(s,P), mortality μ(s,P) and fertility β(s,y,P).
//!
//! Rates come from a closed registry of analytic families with hand-coded
//! derivatives. Programmatic users may also wrap a closure with
//! [`RateSurface::custom`]; its derivatives are finite differences and have to
//! pass the same agreement check as the analytic ones.
//!
//! | family        | formula                                   | params            |
//! |---------------|-------------------------------------------|-------------------|
//! | `constant`    | `c`                                       | `c`               |
//! | `affine_s`    | `c0 + c1 s`                               | `c0, c1`          |
//! | `exp_decay_P` | `a e^{-k P}`                              | `a, k`            |
//! | `logistic_P`  | `a / (1 + e^{k (P - p0)})`                | `a, k, p0`        |
//! | `gaussian_s`  | `a exp(-(s - c)^2 / (2 w^2))`             | `a, c, w`         |
//! | `product`     | `(c0 + c1 s) (d0 + d1 P)`                 | `c0, c1, d0, d1`  |
//!
//! General (non-separable) fertility kernels:
//!
//! | family               | formula                                            | params          |
//! |----------------------|----------------------------------------------------|-----------------|
//! | `zero`               | `0`                                                |                 |
//! | `constant`           | `c`                                                | `c`             |
//! | `offspring_gaussian` | `a e^{-k P} exp(-(s - c - r y)^2 / (2 w^2))`       | `a, k, c, r, w` |

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::SizeGrid;

pub const DEFAULT_P_MAX: f64 = 100.0;
/// Smallest growth rate accepted as "positive".
pub const GAMMA_FLOOR: f64 = 1e-8;
pub const DEFAULT_VALIDATION_SEED: u64 = 42;

pub type SurfaceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type KernelFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum SurfaceFamily {
    Constant { c: f64 },
    AffineS { c0: f64, c1: f64 },
    ExpDecayP { a: f64, k: f64 },
    LogisticP { a: f64, k: f64, p0: f64 },
    GaussianS { a: f64, c: f64, w: f64 },
    Product { c0: f64, c1: f64, d0: f64, d1: f64 },
    Custom(SurfaceFn),
}

/// A rate `v(s, P)` together with `∂v/∂s`, `∂v/∂P` and `∂²v/∂s∂P`.
#[derive(Clone)]
pub struct RateSurface {
    family_name: String,
    params: BTreeMap<String, f64>,
    family: SurfaceFamily,
}

impl fmt::Debug for RateSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RateSurface")
            .field("family", &self.family_name)
            .field("params", &self.params)
            .finish()
    }
}

fn logistic(x: f64) -> f64 {
    // 1 / (1 + e^x), stable for large |x|
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

fn fd_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

impl RateSurface {
    pub fn constant(c: f64) -> Self {
        Self::analytic("constant", &[("c", c)], SurfaceFamily::Constant { c })
    }

    pub fn affine_s(c0: f64, c1: f64) -> Self {
        Self::analytic("affine_s", &[("c0", c0), ("c1", c1)], SurfaceFamily::AffineS { c0, c1 })
    }

    pub fn exp_decay_p(a: f64, k: f64) -> Self {
        Self::analytic("exp_decay_P", &[("a", a), ("k", k)], SurfaceFamily::ExpDecayP { a, k })
    }

    pub fn logistic_p(a: f64, k: f64, p0: f64) -> Self {
        Self::analytic("logistic_P", &[("a", a), ("k", k), ("p0", p0)], SurfaceFamily::LogisticP { a, k, p0 })
    }

    pub fn gaussian_s(a: f64, c: f64, w: f64) -> Self {
        Self::analytic("gaussian_s", &[("a", a), ("c", c), ("w", w)], SurfaceFamily::GaussianS { a, c, w })
    }

    pub fn product(c0: f64, c1: f64, d0: f64, d1: f64) -> Self {
        Self::analytic(
            "product",
            &[("c0", c0), ("c1", c1), ("d0", d0), ("d1", d1)],
            SurfaceFamily::Product { c0, c1, d0, d1 },
        )
    }

    /// Wraps an arbitrary closure; derivatives are central differences.
    pub fn custom(name: &str, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            family_name: format!("custom:{name}"),
            params: BTreeMap::new(),
            family: SurfaceFamily::Custom(Arc::new(f)),
        }
    }

    fn analytic(name: &str, params: &[(&str, f64)], family: SurfaceFamily) -> Self {
        Self {
            family_name: name.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            family,
        }
    }

    pub fn family(&self) -> &str {
        &self.family_name
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self.family, SurfaceFamily::Custom(_))
    }

    /// Whether the family can vary with `P` at all.
    pub fn depends_on_p(&self) -> bool {
        match &self.family {
            SurfaceFamily::Constant { .. } | SurfaceFamily::AffineS { .. } | SurfaceFamily::GaussianS { .. } => false,
            SurfaceFamily::ExpDecayP { k, .. } | SurfaceFamily::LogisticP { k, .. } => *k != 0.0,
            SurfaceFamily::Product { c0, c1, d1, .. } => *d1 != 0.0 && (*c0 != 0.0 || *c1 != 0.0),
            SurfaceFamily::Custom(_) => true,
        }
    }

    pub fn value(&self, s: f64, p: f64) -> f64 {
        match &self.family {
            SurfaceFamily::Constant { c } => *c,
            SurfaceFamily::AffineS { c0, c1 } => c0 + c1 * s,
            SurfaceFamily::ExpDecayP { a, k } => a * (-k * p).exp(),
            SurfaceFamily::LogisticP { a, k, p0 } => a * logistic(k * (p - p0)),
            SurfaceFamily::GaussianS { a, c, w } => a * (-(s - c).powi(2) / (2.0 * w * w)).exp(),
            SurfaceFamily::Product { c0, c1, d0, d1 } => (c0 + c1 * s) * (d0 + d1 * p),
            SurfaceFamily::Custom(f) => f(s, p),
        }
    }

    pub fn ds(&self, s: f64, p: f64) -> f64 {
        match &self.family {
            SurfaceFamily::Constant { .. } | SurfaceFamily::ExpDecayP { .. } | SurfaceFamily::LogisticP { .. } => 0.0,
            SurfaceFamily::AffineS { c1, .. } => *c1,
            SurfaceFamily::GaussianS { c, w, .. } => -(s - c) / (w * w) * self.value(s, p),
            SurfaceFamily::Product { c1, d0, d1, .. } => c1 * (d0 + d1 * p),
            SurfaceFamily::Custom(f) => {
                let h = fd_step(s);
                (f(s + h, p) - f(s - h, p)) / (2.0 * h)
            }
        }
    }

    pub fn dp(&self, s: f64, p: f64) -> f64 {
        match &self.family {
            SurfaceFamily::Constant { .. } | SurfaceFamily::AffineS { .. } | SurfaceFamily::GaussianS { .. } => 0.0,
            SurfaceFamily::ExpDecayP { k, .. } => -k * self.value(s, p),
            SurfaceFamily::LogisticP { a, k, p0 } => {
                let l = logistic(k * (p - p0));
                -a * k * l * (1.0 - l)
            }
            SurfaceFamily::Product { c0, c1, d1, .. } => (c0 + c1 * s) * d1,
            SurfaceFamily::Custom(f) => {
                let h = fd_step(p);
                (f(s, p + h) - f(s, p - h)) / (2.0 * h)
            }
        }
    }

    pub fn dsp(&self, s: f64, p: f64) -> f64 {
        match &self.family {
            SurfaceFamily::Product { c1, d1, .. } => c1 * d1,
            SurfaceFamily::Custom(f) => {
                let hs = 1e-4 * s.abs().max(1.0);
                let hp = 1e-4 * p.abs().max(1.0);
                (f(s + hs, p + hp) - f(s + hs, p - hp) - f(s - hs, p + hp) + f(s - hs, p - hp)) / (4.0 * hs * hp)
            }
            _ => 0.0,
        }
    }
}

fn take_params(
    family: &str,
    params: &BTreeMap<String, f64>,
    names: &[&str],
    field: &str,
) -> Result<Vec<f64>> {
    for key in params.keys() {
        if !names.contains(&key.as_str()) {
            return Err(Error::Configuration {
                field: format!("{field}.params.{key}"),
                reason: format!("unknown parameter for family `{family}` (expected {names:?})"),
            });
        }
    }
    names
        .iter()
        .map(|n| {
            let v = params.get(*n).copied().ok_or_else(|| Error::Configuration {
                field: format!("{field}.params.{n}"),
                reason: format!("missing parameter for family `{family}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Configuration {
                    field: format!("{field}.params.{n}"),
                    reason: "parameter must be finite".into(),
                });
            }
            Ok(v)
        })
        .collect()
}

/// Looks up `family` in the registry; `params` must be complete.
pub fn make_rate_surface(family: &str, params: &BTreeMap<String, f64>) -> Result<RateSurface> {
    make_rate_surface_at(family, params, "rate")
}

/// Like [`make_rate_surface`], naming `field` in configuration errors.
pub fn make_rate_surface_at(family: &str, params: &BTreeMap<String, f64>, field: &str) -> Result<RateSurface> {
    let surface = match family {
        "constant" => {
            let v = take_params(family, params, &["c"], field)?;
            RateSurface::constant(v[0])
        }
        "affine_s" => {
            let v = take_params(family, params, &["c0", "c1"], field)?;
            RateSurface::affine_s(v[0], v[1])
        }
        "exp_decay_P" => {
            let v = take_params(family, params, &["a", "k"], field)?;
            RateSurface::exp_decay_p(v[0], v[1])
        }
        "logistic_P" => {
            let v = take_params(family, params, &["a", "k", "p0"], field)?;
            RateSurface::logistic_p(v[0], v[1], v[2])
        }
        "gaussian_s" => {
            let v = take_params(family, params, &["a", "c", "w"], field)?;
            if v[2] <= 0.0 {
                return Err(Error::Configuration {
                    field: format!("{field}.params.w"),
                    reason: "width must be positive".into(),
                });
            }
            RateSurface::gaussian_s(v[0], v[1], v[2])
        }
        "product" => {
            let v = take_params(family, params, &["c0", "c1", "d0", "d1"], field)?;
            RateSurface::product(v[0], v[1], v[2], v[3])
        }
        other => {
            return Err(Error::Configuration {
                field: format!("{field}.family"),
                reason: format!("unknown rate family `{other}`"),
            })
        }
    };
    Ok(surface)
}

#[derive(Clone)]
enum KernelFamily {
    Zero,
    Constant { c: f64 },
    OffspringGaussian { a: f64, k: f64, c: f64, r: f64, w: f64 },
    Custom { b: KernelFn, b_p: Option<KernelFn> },
}

/// Non-separable fertility `b(s, y, P)`.
#[derive(Clone)]
pub struct GeneralKernel {
    family_name: String,
    params: BTreeMap<String, f64>,
    family: KernelFamily,
}

impl fmt::Debug for GeneralKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralKernel")
            .field("family", &self.family_name)
            .field("params", &self.params)
            .finish()
    }
}

impl GeneralKernel {
    pub fn zero() -> Self {
        Self { family_name: "zero".into(), params: BTreeMap::new(), family: KernelFamily::Zero }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            family_name: "constant".into(),
            params: [("c".to_string(), c)].into_iter().collect(),
            family: KernelFamily::Constant { c },
        }
    }

    pub fn offspring_gaussian(a: f64, k: f64, c: f64, r: f64, w: f64) -> Self {
        Self {
            family_name: "offspring_gaussian".into(),
            params: [("a", a), ("k", k), ("c", c), ("r", r), ("w", w)]
                .iter()
                .map(|(n, v)| (n.to_string(), *v))
                .collect(),
            family: KernelFamily::OffspringGaussian { a, k, c, r, w },
        }
    }

    /// Closure-backed kernel; `b_p` falls back to a central difference.
    pub fn custom(
        name: &str,
        b: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
        b_p: Option<KernelFn>,
    ) -> Self {
        Self {
            family_name: format!("custom:{name}"),
            params: BTreeMap::new(),
            family: KernelFamily::Custom { b: Arc::new(b), b_p },
        }
    }

    pub fn family(&self) -> &str {
        &self.family_name
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn value(&self, s: f64, y: f64, p: f64) -> f64 {
        match &self.family {
            KernelFamily::Zero => 0.0,
            KernelFamily::Constant { c } => *c,
            KernelFamily::OffspringGaussian { a, k, c, r, w } => {
                a * (-k * p).exp() * (-(s - c - r * y).powi(2) / (2.0 * w * w)).exp()
            }
            KernelFamily::Custom { b, .. } => b(s, y, p),
        }
    }

    pub fn dp(&self, s: f64, y: f64, p: f64) -> f64 {
        match &self.family {
            KernelFamily::Zero | KernelFamily::Constant { .. } => 0.0,
            KernelFamily::OffspringGaussian { k, .. } => -k * self.value(s, y, p),
            KernelFamily::Custom { b, b_p } => match b_p {
                Some(d) => d(s, y, p),
                None => {
                    let h = fd_step(p);
                    (b(s, y, p + h) - b(s, y, p - h)) / (2.0 * h)
                }
            },
        }
    }

    fn has_analytic_dp(&self) -> bool {
        !matches!(self.family, KernelFamily::Custom { b_p: None, .. })
    }
}

/// Registry lookup for general kernels.
pub fn make_general_kernel(family: &str, params: &BTreeMap<String, f64>, field: &str) -> Result<GeneralKernel> {
    match family {
        "zero" => {
            take_params(family, params, &[], field)?;
            Ok(GeneralKernel::zero())
        }
        "constant" => {
            let v = take_params(family, params, &["c"], field)?;
            Ok(GeneralKernel::constant(v[0]))
        }
        "offspring_gaussian" => {
            let v = take_params(family, params, &["a", "k", "c", "r", "w"], field)?;
            if v[4] <= 0.0 {
                return Err(Error::Configuration {
                    field: format!("{field}.params.w"),
                    reason: "width must be positive".into(),
                });
            }
            Ok(GeneralKernel::offspring_gaussian(v[0], v[1], v[2], v[3], v[4]))
        }
        other => Err(Error::Configuration {
            field: format!("{field}.family"),
            reason: format!("unknown kernel family `{other}`"),
        }),
    }
}

/// Fertility β(s, y, P): either `β₁(s,P) β₂(y)` or a general kernel.
#[derive(Debug, Clone)]
pub enum FertilityKernel {
    Separable { beta1: RateSurface, beta2: RateSurface },
    General(GeneralKernel),
}

impl FertilityKernel {
    pub fn separable(beta1: RateSurface, beta2: RateSurface) -> Self {
        FertilityKernel::Separable { beta1, beta2 }
    }

    pub fn general(kernel: GeneralKernel) -> Self {
        FertilityKernel::General(kernel)
    }

    pub fn is_separable(&self) -> bool {
        matches!(self, FertilityKernel::Separable { .. })
    }

    pub fn value(&self, s: f64, y: f64, p: f64) -> f64 {
        match self {
            FertilityKernel::Separable { beta1, beta2 } => beta1.value(s, p) * beta2.value(y, 0.0),
            FertilityKernel::General(k) => k.value(s, y, p),
        }
    }

    pub fn dp(&self, s: f64, y: f64, p: f64) -> f64 {
        match self {
            FertilityKernel::Separable { beta1, beta2 } => beta1.dp(s, p) * beta2.value(y, 0.0),
            FertilityKernel::General(k) => k.dp(s, y, p),
        }
    }

    /// `(β₁, β₂)` for separable kernels.
    pub fn separable_parts(&self) -> Option<(&RateSurface, &RateSurface)> {
        match self {
            FertilityKernel::Separable { beta1, beta2 } => Some((beta1, beta2)),
            FertilityKernel::General(_) => None,
        }
    }
}

/// Checks a fertility kernel by sampling `[0,m]² × [0,p_max]` on a lattice:
/// negative values are a model error, a `P`-dependent `β₂` a configuration error.
pub fn make_fertility(kernel: FertilityKernel, m: f64, p_max: f64) -> Result<FertilityKernel> {
    const N: usize = 12;
    let pts = |hi: f64| (0..=N).map(move |i| hi * i as f64 / N as f64);
    if let FertilityKernel::Separable { beta2, .. } = &kernel {
        if beta2.depends_on_p() {
            return Err(Error::Configuration {
                field: "beta.beta2".into(),
                reason: "β₂ must be a function of size only".into(),
            });
        }
    }
    for s in pts(m) {
        for y in pts(m) {
            for p in pts(p_max) {
                let b = kernel.value(s, y, p);
                if !b.is_finite() || b < 0.0 {
                    return Err(Error::Model(format!("fertility β({s}, {y}, {p}) = {b} is negative or non-finite")));
                }
            }
        }
    }
    Ok(kernel)
}

/// The triple (γ, μ, β) on the size domain `[0, m]`.
#[derive(Debug, Clone)]
pub struct VitalRates {
    pub gamma: RateSurface,
    pub mu: RateSurface,
    pub beta: FertilityKernel,
    pub m: f64,
    /// Upper end of the population range over which rates are sampled.
    pub p_max: f64,
}

impl VitalRates {
    pub fn new(gamma: RateSurface, mu: RateSurface, beta: FertilityKernel, m: f64) -> Result<Self> {
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::Argument(format!("maximal size must be positive, got {m}")));
        }
        Ok(Self { gamma, mu, beta, m, p_max: DEFAULT_P_MAX })
    }

    pub fn with_p_max(mut self, p_max: f64) -> Self {
        self.p_max = p_max;
        self
    }

    /// Same model with a different fertility kernel.
    pub fn with_beta(&self, beta: FertilityKernel) -> Self {
        Self { beta, ..self.clone() }
    }

    /// `Γ(s) = ∫_0^s dy / γ(y, P)` at the right end, by midpoint quadrature.
    pub fn transit_time(&self, grid: &SizeGrid, p: f64) -> f64 {
        grid.midpoints()
            .iter()
            .zip(grid.weights())
            .map(|(&s, w)| w / self.gamma.value(s, p))
            .sum()
    }
}

/// Rates and derivatives sampled on a grid at a frozen population size.
#[derive(Debug, Clone)]
pub struct SampledRates {
    pub p: f64,
    pub gamma: Vec<f64>,
    pub gamma_edges: Vec<f64>,
    pub gamma_s: Vec<f64>,
    pub gamma_p: Vec<f64>,
    pub gamma_p_edges: Vec<f64>,
    pub gamma_sp: Vec<f64>,
    pub mu: Vec<f64>,
    pub mu_p: Vec<f64>,
}

impl SampledRates {
    pub fn new(rates: &VitalRates, grid: &SizeGrid, p: f64) -> Self {
        let mids = grid.midpoints();
        let edges = grid.edges();
        let g = &rates.gamma;
        let mu = &rates.mu;
        Self {
            p,
            gamma: mids.iter().map(|&s| g.value(s, p)).collect(),
            gamma_edges: edges.iter().map(|&s| g.value(s, p)).collect(),
            gamma_s: mids.iter().map(|&s| g.ds(s, p)).collect(),
            gamma_p: mids.iter().map(|&s| g.dp(s, p)).collect(),
            gamma_p_edges: edges.iter().map(|&s| g.dp(s, p)).collect(),
            gamma_sp: mids.iter().map(|&s| g.dsp(s, p)).collect(),
            mu: mids.iter().map(|&s| mu.value(s, p)).collect(),
            mu_p: mids.iter().map(|&s| mu.dp(s, p)).collect(),
        }
    }

    /// Fails when γ drops below [`GAMMA_FLOOR`] at a midpoint or edge.
    pub fn require_positive_growth(&self, grid: &SizeGrid) -> Result<()> {
        let mids = grid.midpoints().iter().zip(&self.gamma);
        let edges = grid.edges().iter().zip(&self.gamma_edges);
        for (s, g) in mids.chain(edges) {
            if !(*g >= GAMMA_FLOOR) {
                return Err(Error::Model(format!(
                    "growth rate γ({s}, {}) = {g} is below the floor {GAMMA_FLOOR}",
                    self.p
                )));
            }
        }
        Ok(())
    }
}

/// Pass/fail for one sign condition, with the extreme observed value.
#[derive(Debug, Clone, Serialize)]
pub struct SignCheck {
    pub holds: bool,
    /// Smallest sampled value.
    pub observed_min: f64,
    /// Coordinates of the first offending sample, `(s, P)` or `(s, y, P)`.
    pub offending: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeCheck {
    pub surface: String,
    pub derivative: String,
    pub max_relative_error: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IrreducibilityCheck {
    pub p: f64,
    pub epsilon: f64,
    pub integral: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub p_max: f64,
    pub gamma_positive: SignCheck,
    pub mu_nonnegative: SignCheck,
    pub beta_nonnegative: SignCheck,
    pub derivatives: Vec<DerivativeCheck>,
    pub irreducibility: Vec<IrreducibilityCheck>,
}

impl ValidationReport {
    /// γ > 0, μ ≥ 0 and β ≥ 0.
    pub fn mandatory_pass(&self) -> bool {
        self.gamma_positive.holds && self.mu_nonnegative.holds && self.beta_nonnegative.holds
    }

    pub fn all_pass(&self) -> bool {
        self.mandatory_pass()
            && self.derivatives.iter().all(|d| d.holds)
            && self.irreducibility.iter().all(|c| c.holds)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ValidationOptions {
    pub seed: u64,
    pub lattice: usize,
    pub random_points: usize,
    pub derivative_tolerance: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self { seed: DEFAULT_VALIDATION_SEED, lattice: 30, random_points: 100, derivative_tolerance: 1e-4 }
    }
}

fn relative_error(analytic: f64, numeric: f64, value: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-6 * value.abs().max(1.0));
    (analytic - numeric).abs() / scale
}

fn check_surface_derivatives(
    name: &str,
    surf: &RateSurface,
    points: &[(f64, f64)],
    tol: f64,
    out: &mut Vec<DerivativeCheck>,
) {
    let mut worst = [0.0f64; 3];
    for &(s, p) in points {
        let v = surf.value(s, p);
        let hs = fd_step(s);
        let hp = fd_step(p);
        let fd_s = (surf.value(s + hs, p) - surf.value(s - hs, p)) / (2.0 * hs);
        let fd_p = (surf.value(s, p + hp) - surf.value(s, p - hp)) / (2.0 * hp);
        // cross difference of values; a nested difference of `ds` is too noisy for closures
        let (ks, kp) = (1e-3 * s.abs().max(1.0), 1e-3 * p.abs().max(1.0));
        let fd_sp = (surf.value(s + ks, p + kp) - surf.value(s + ks, p - kp) - surf.value(s - ks, p + kp)
            + surf.value(s - ks, p - kp))
            / (4.0 * ks * kp);
        let errs = [
            relative_error(surf.ds(s, p), fd_s, v),
            relative_error(surf.dp(s, p), fd_p, v),
            relative_error(surf.dsp(s, p), fd_sp, v),
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = if e.is_nan() { f64::INFINITY } else { w.max(e) };
        }
    }
    for (label, w) in ["ds", "dP", "dsdP"].iter().zip(worst) {
        out.push(DerivativeCheck {
            surface: name.to_string(),
            derivative: label.to_string(),
            max_relative_error: w,
            holds: w <= tol,
        });
    }
}

/// Midpoint rule for `∫_0^ε ∫_{m-ε}^m β(s, y, P) dy ds` on a 20×20 tensor grid.
fn corner_integral(beta: &FertilityKernel, m: f64, eps: f64, p: f64) -> f64 {
    const N: usize = 20;
    let h = eps / N as f64;
    let mut acc = 0.0;
    for i in 0..N {
        let s = (i as f64 + 0.5) * h;
        for j in 0..N {
            let y = m - eps + (j as f64 + 0.5) * h;
            acc += beta.value(s, y, p);
        }
    }
    acc * h * h
}

/// Samples the rates and reports sign conditions, derivative agreement and
/// the birth-corner irreducibility integrals. Never fails; every finding is a
/// report entry.
pub fn validate_rates(
    rates: &VitalRates,
    grid: &SizeGrid,
    p_probe: &[f64],
    options: &ValidationOptions,
) -> ValidationReport {
    let m = rates.m;
    let p_max = rates.p_max;
    let nl = options.lattice.max(2);
    let lattice = |hi: f64| (0..nl).map(move |i| hi * i as f64 / (nl - 1) as f64);

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let random_sp: Vec<(f64, f64)> = (0..options.random_points)
        .map(|_| (rng.random_range(0.0..=m), rng.random_range(0.0..=p_max)))
        .collect();
    let random_y: Vec<f64> = (0..options.random_points).map(|_| rng.random_range(0.0..=m)).collect();

    let mut sp_points: Vec<(f64, f64)> = lattice(m).flat_map(|s| lattice(p_max).map(move |p| (s, p))).collect();
    sp_points.extend(grid.midpoints().iter().map(|&s| (s, 0.0)));
    sp_points.extend(&random_sp);

    let sign_check = |f: &dyn Fn(f64, f64) -> f64, strict_floor: Option<f64>| -> SignCheck {
        let mut min = f64::INFINITY;
        let mut offending = None;
        for &(s, p) in &sp_points {
            let v = f(s, p);
            let bad = match strict_floor {
                Some(floor) => !(v >= floor),
                None => !(v >= 0.0),
            };
            if bad && offending.is_none() {
                offending = Some(vec![s, p]);
            }
            if v < min || v.is_nan() {
                min = v;
            }
        }
        SignCheck { holds: offending.is_none(), observed_min: min, offending }
    };
    let gamma_positive = sign_check(&|s, p| rates.gamma.value(s, p), Some(GAMMA_FLOOR));
    let mu_nonnegative = sign_check(&|s, p| rates.mu.value(s, p), None);

    let beta_nonnegative = {
        let mut min = f64::INFINITY;
        let mut offending = None;
        let mut visit = |s: f64, y: f64, p: f64| {
            let v = rates.beta.value(s, y, p);
            if !(v >= 0.0) && offending.is_none() {
                offending = Some(vec![s, y, p]);
            }
            if v < min || v.is_nan() {
                min = v;
            }
        };
        for s in lattice(m) {
            for y in lattice(m) {
                for p in lattice(p_max) {
                    visit(s, y, p);
                }
            }
        }
        for (&(s, p), &y) in random_sp.iter().zip(&random_y) {
            visit(s, y, p);
        }
        SignCheck { holds: offending.is_none(), observed_min: min, offending }
    };

    let tol = options.derivative_tolerance;
    let mut derivatives = Vec::new();
    check_surface_derivatives("gamma", &rates.gamma, &random_sp, tol, &mut derivatives);
    check_surface_derivatives("mu", &rates.mu, &random_sp, tol, &mut derivatives);
    match &rates.beta {
        FertilityKernel::Separable { beta1, beta2 } => {
            check_surface_derivatives("beta1", beta1, &random_sp, tol, &mut derivatives);
            check_surface_derivatives("beta2", beta2, &random_sp, tol, &mut derivatives);
        }
        FertilityKernel::General(k) => {
            let mut worst = 0.0f64;
            if k.has_analytic_dp() {
                for (&(s, p), &y) in random_sp.iter().zip(&random_y) {
                    let h = fd_step(p);
                    let fd = (k.value(s, y, p + h) - k.value(s, y, p - h)) / (2.0 * h);
                    let e = relative_error(k.dp(s, y, p), fd, k.value(s, y, p));
                    worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
                }
            }
            derivatives.push(DerivativeCheck {
                surface: "beta".into(),
                derivative: "dP".into(),
                max_relative_error: worst,
                holds: worst <= tol,
            });
        }
    }

    let irreducibility = p_probe
        .iter()
        .flat_map(|&p| {
            [10.0, 20.0, 40.0].into_iter().map(move |d| {
                let eps = m / d;
                let integral = corner_integral(&rates.beta, m, eps, p);
                IrreducibilityCheck { p, epsilon: eps, integral, holds: integral > 0.0 }
            })
        })
        .collect();

    ValidationReport {
        seed: options.seed,
        p_max,
        gamma_positive,
        mu_nonnegative,
        beta_nonnegative,
        derivatives,
        irreducibility,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn params(kv: &[(&str, f64)]) -> BTreeMap<String, f64> {
        kv.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    pub(crate) fn baseline() -> VitalRates {
        VitalRates::new(
            RateSurface::constant(1.0),
            RateSurface::constant(1.0),
            FertilityKernel::separable(RateSurface::exp_decay_p(E * E, 1.0), RateSurface::constant(1.0)),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn registry_examples() {
        let c = make_rate_surface("constant", &params(&[("c", 1.0)])).unwrap();
        assert_eq!(c.value(0.3, 7.0), 1.0);
        assert_eq!((c.ds(0.3, 7.0), c.dp(0.3, 7.0), c.dsp(0.3, 7.0)), (0.0, 0.0, 0.0));

        let e = make_rate_surface("exp_decay_P", &params(&[("a", 7.389056), ("k", 1.0)])).unwrap();
        let v = e.value(0.5, 2.0);
        assert!((v - 7.389056 * (-2.0f64).exp()).abs() < 1e-12);
        assert!((e.dp(0.5, 2.0) + v).abs() < 1e-12);

        let a = make_rate_surface("affine_s", &params(&[("c0", 1.0), ("c1", 2.0)])).unwrap();
        assert_eq!(a.value(0.25, 3.0), 1.5);
        assert_eq!(a.ds(0.25, 3.0), 2.0);
    }

    #[test]
    fn registry_errors_name_the_field() {
        match make_rate_surface("exp_decay_P", &params(&[("a", 1.0)])) {
            Err(Error::Configuration { field, .. }) => assert_eq!(field, "rate.params.k"),
            other => panic!("unexpected {other:?}"),
        }
        match make_rate_surface("cubic", &params(&[])) {
            Err(Error::Configuration { field, .. }) => assert_eq!(field, "rate.family"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(make_rate_surface("constant", &params(&[("c", 1.0), ("d", 2.0)])).is_err());
    }

    #[test]
    fn fertility_examples() {
        let k = make_fertility(
            FertilityKernel::separable(RateSurface::exp_decay_p(E * E, 1.0), RateSurface::constant(1.0)),
            1.0,
            DEFAULT_P_MAX,
        )
        .unwrap();
        for &(s, y, p) in &[(0.1, 0.9, 0.0), (0.5, 0.2, 1.0), (1.0, 1.0, 3.0)] {
            assert!((k.value(s, y, p) - E * E * (-p).exp()).abs() < 1e-12);
        }
        let z = make_fertility(FertilityKernel::general(GeneralKernel::zero()), 1.0, 10.0).unwrap();
        assert_eq!(z.value(0.3, 0.4, 1.0), 0.0);

        let m = 2.0;
        let b1 = RateSurface::affine_s(1.0, 1.0);
        let k = FertilityKernel::separable(b1.clone(), RateSurface::affine_s(0.0, 1.0 / m));
        assert!((k.value(0.5, 1.5, 0.0) - b1.value(0.5, 0.0) * 1.5 / m).abs() < 1e-15);

        let neg = FertilityKernel::general(GeneralKernel::constant(-0.1));
        assert!(matches!(make_fertility(neg, 1.0, 10.0), Err(Error::Model(_))));
        let p_dep = FertilityKernel::separable(RateSurface::constant(1.0), RateSurface::exp_decay_p(1.0, 1.0));
        assert!(matches!(make_fertility(p_dep, 1.0, 10.0), Err(Error::Configuration { .. })));
    }

    #[test]
    fn separable_kernels_are_rank_one() {
        let k = FertilityKernel::separable(RateSurface::product(1.0, 2.0, 3.0, -0.5), RateSurface::gaussian_s(1.0, 0.7, 0.2));
        let pts = [0.0, 0.13, 0.5, 0.77, 1.0];
        for &p in &[0.0, 1.5, 4.0] {
            for &s in &pts {
                for &y in &pts {
                    for &(s2, y2) in &[(0.3, 0.9), (0.95, 0.05)] {
                        let lhs = k.value(s, y, p) * k.value(s2, y2, p);
                        let rhs = k.value(s, y2, p) * k.value(s2, y, p);
                        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1e-300));
                    }
                }
            }
        }
    }

    #[test]
    fn baseline_validates() {
        let rates = baseline();
        let grid = SizeGrid::uniform(1.0, 100).unwrap();
        let rep = validate_rates(&rates, &grid, &[0.5, 1.0, 2.0], &ValidationOptions::default());
        assert!(rep.all_pass(), "{rep:#?}");
        for c in &rep.irreducibility {
            let exact = c.epsilon * c.epsilon * E * E * (-c.p).exp();
            assert!((c.integral - exact).abs() < 1e-12 * exact);
        }
    }

    #[test]
    fn zero_fertility_is_reducible() {
        let rates = baseline().with_beta(FertilityKernel::general(GeneralKernel::zero()));
        let grid = SizeGrid::uniform(1.0, 50).unwrap();
        let rep = validate_rates(&rates, &grid, &[1.0], &ValidationOptions::default());
        assert!(rep.mandatory_pass());
        assert!(rep.irreducibility.iter().all(|c| !c.holds));
    }

    #[test]
    fn negative_growth_is_flagged_with_location() {
        let mut rates = baseline();
        rates.gamma = RateSurface::affine_s(0.5, -1.0);
        let grid = SizeGrid::uniform(1.0, 50).unwrap();
        let rep = validate_rates(&rates, &grid, &[1.0], &ValidationOptions::default());
        assert!(!rep.gamma_positive.holds);
        let at = rep.gamma_positive.offending.clone().unwrap();
        assert!(rates.gamma.value(at[0], at[1]) < GAMMA_FLOOR);
        assert!(!rep.mandatory_pass());
    }

    #[test]
    fn validation_is_seed_deterministic() {
        let rates = baseline();
        let grid = SizeGrid::uniform(1.0, 20).unwrap();
        let opts = ValidationOptions { seed: 7, ..Default::default() };
        let a = serde_json::to_string(&validate_rates(&rates, &grid, &[1.0], &opts)).unwrap();
        let b = serde_json::to_string(&validate_rates(&rates, &grid, &[1.0], &opts)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn custom_surface_derivatives_pass_agreement() {
        let mut rates = baseline();
        rates.mu = RateSurface::custom("smooth", |s, p| 1.0 + 0.3 * s * s + 0.1 * (0.2 * p).sin());
        let grid = SizeGrid::uniform(1.0, 20).unwrap();
        let rep = validate_rates(&rates, &grid, &[1.0], &ValidationOptions::default());
        let mu_checks: Vec<_> = rep.derivatives.iter().filter(|d| d.surface == "mu").collect();
        assert!(mu_checks.iter().all(|d| d.holds), "{mu_checks:?}");
    }
}
