//! JSON run configuration shared by the CLI commands.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{Rectangle, SizeGrid};
use crate::rates::{
    make_fertility, make_general_kernel, make_rate_surface_at, FertilityKernel, RateSurface, VitalRates,
    DEFAULT_P_MAX, DEFAULT_VALIDATION_SEED,
};
use crate::simulator::PerturbationMode;

fn config_error(field: &str, reason: impl Into<String>) -> Error {
    Error::Configuration { field: field.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub family: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl SurfaceSpec {
    pub fn new(family: &str, params: &[(&str, f64)]) -> Self {
        Self { family: family.into(), params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect() }
    }

    fn build(&self, field: &str) -> Result<RateSurface> {
        make_rate_surface_at(&self.family, &self.params, field)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BetaSpec {
    Separable {
        beta1: SurfaceSpec,
        beta2: SurfaceSpec,
    },
    General {
        family: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
}

fn default_p_max() -> f64 {
    DEFAULT_P_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub gamma: SurfaceSpec,
    pub mu: SurfaceSpec,
    pub beta: BetaSpec,
    /// Upper end of the population range on which the rates are validated.
    #[serde(default = "default_p_max")]
    pub p_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub m: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteChoice {
    #[default]
    Auto,
    Separable,
    General,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumConfig {
    #[serde(default)]
    pub route: RouteChoice,
    /// Defaults to `[1e-3, model.p_max]`.
    #[serde(default, rename = "P_range")]
    pub p_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    /// Root-search rectangle; a default is derived from the matrix spectrum when absent.
    #[serde(default)]
    pub region: Option<Rectangle>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationShape {
    Uniform,
    FirstEigvec,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSpec {
    /// `p*` of the first equilibrium, perturbed.
    Perturbation {
        amplitude: f64,
        mode: PerturbationShape,
        /// Falls back to the run seed for random shapes.
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Explicit profile `s ↦ f(s, 0)` from a rate family.
    Profile {
        family: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
}

impl InitialSpec {
    pub fn is_perturbation(&self) -> bool {
        matches!(self, InitialSpec::Perturbation { .. })
    }

    pub fn perturbation_mode(&self, run_seed: u64) -> Option<(f64, PerturbationMode)> {
        match self {
            InitialSpec::Perturbation { amplitude, mode, seed } => Some((
                *amplitude,
                match mode {
                    PerturbationShape::Uniform => PerturbationMode::Uniform,
                    PerturbationShape::FirstEigvec => PerturbationMode::FirstEigvec,
                    PerturbationShape::Random => PerturbationMode::Random { seed: seed.unwrap_or(run_seed) },
                },
            )),
            InitialSpec::Profile { .. } => None,
        }
    }

    pub fn profile(&self, grid: &SizeGrid) -> Result<Option<Vec<f64>>> {
        match self {
            InitialSpec::Profile { family, params } => {
                let f = make_rate_surface_at(family, params, "simulate.initial")?;
                Ok(Some(grid.sample(|s| f.value(s, 0.0))))
            }
            InitialSpec::Perturbation { .. } => Ok(None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub t_end: f64,
    #[serde(default)]
    pub cadence: Option<f64>,
    pub initial: InitialSpec,
    /// Growth-rate fit window; defaults to `[t_end/4, 3 t_end/4]`.
    #[serde(default)]
    pub growth_window: Option<[f64; 2]>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            t_end: 6.0,
            cadence: Some(1.0),
            initial: InitialSpec::Perturbation { amplitude: 0.01, mode: PerturbationShape::Uniform, seed: None },
            growth_window: None,
        }
    }
}

impl SimulateConfig {
    pub fn window(&self) -> (f64, f64) {
        self.growth_window.map_or((0.25 * self.t_end, 0.75 * self.t_end), |[a, b]| (a, b))
    }
}

fn tol_route() -> f64 {
    2e-2
}
fn tol_jacobian() -> f64 {
    1e-5
}
fn tol_mass() -> f64 {
    1e-4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "tol_route")]
    pub route_agreement: f64,
    #[serde(default = "tol_route")]
    pub grid_agreement: f64,
    #[serde(default = "tol_jacobian")]
    pub jacobian: f64,
    /// Absolute tolerance on the measured growth rate; `max(0.05, 10 h)` when absent.
    #[serde(default)]
    pub growth_rate: Option<f64>,
    #[serde(default = "tol_mass")]
    pub mass_balance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            route_agreement: tol_route(),
            grid_agreement: tol_route(),
            jacobian: tol_jacobian(),
            growth_rate: None,
            mass_balance: tol_mass(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: "out".into(), formats: vec![Format::Csv] }
    }
}

fn default_seed() -> u64 {
    DEFAULT_VALIDATION_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub equilibrium: EquilibriumConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_error("json", e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn from_value(value: Value) -> Result<Self> {
        let cfg: Self = serde_json::from_value(value).map_err(|e| config_error("json", e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Structural checks that do not need the rate families.
    pub fn check(&self) -> Result<()> {
        if !(self.grid.m > 0.0 && self.grid.m.is_finite()) {
            return Err(config_error("grid.m", "must be positive"));
        }
        if self.grid.n_cells < 8 {
            return Err(config_error("grid.n_cells", "must be at least 8"));
        }
        if !(self.model.p_max > 0.0 && self.model.p_max.is_finite()) {
            return Err(config_error("model.p_max", "must be positive"));
        }
        let (lo, hi) = self.p_range();
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(config_error("equilibrium.P_range", "need 0 < lo < hi"));
        }
        if let Some(r) = &self.stability.region {
            Rectangle::new(r.re_lo, r.re_hi, r.im_lo, r.im_hi)
                .map_err(|e| config_error("stability.region", e.to_string()))?;
        }
        let sim = &self.simulate;
        if !(sim.t_end >= 0.0 && sim.t_end.is_finite()) {
            return Err(config_error("simulate.t_end", "must be finite and nonnegative"));
        }
        if let Some(c) = sim.cadence {
            if !(c > 0.0 && c.is_finite()) {
                return Err(config_error("simulate.cadence", "must be positive"));
            }
        }
        if let InitialSpec::Perturbation { amplitude, .. } = sim.initial {
            if !(amplitude.abs() <= crate::simulator::MAX_PERTURBATION) {
                return Err(config_error("simulate.initial.amplitude", "must lie in [-0.1, 0.1]"));
            }
        }
        let (a, b) = sim.window();
        if !(a >= 0.0 && b > a) {
            return Err(config_error("simulate.growth_window", "need 0 <= t0 < t1"));
        }
        let v = &self.verify;
        let tolerances = [v.route_agreement, v.grid_agreement, v.jacobian, v.mass_balance, v.growth_rate.unwrap_or(1.0)];
        if tolerances.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(config_error("verify", "tolerances must be positive"));
        }
        if self.output.formats.is_empty() {
            return Err(config_error("output.formats", "at least one format is required"));
        }
        Ok(())
    }

    pub fn p_range(&self) -> (f64, f64) {
        self.equilibrium.p_range.map_or((crate::equilibrium::DEFAULT_P_MIN, self.model.p_max), |[a, b]| (a, b))
    }

    pub fn grid(&self) -> Result<SizeGrid> {
        SizeGrid::uniform(self.grid.m, self.grid.n_cells)
    }

    pub fn build_rates(&self) -> Result<VitalRates> {
        let gamma = self.model.gamma.build("model.gamma")?;
        let mu = self.model.mu.build("model.mu")?;
        let kernel = match &self.model.beta {
            BetaSpec::Separable { beta1, beta2 } => {
                FertilityKernel::separable(beta1.build("model.beta.beta1")?, beta2.build("model.beta.beta2")?)
            }
            BetaSpec::General { family, params } => {
                FertilityKernel::general(make_general_kernel(family, params, "model.beta")?)
            }
        };
        let beta = make_fertility(kernel, self.grid.m, self.model.p_max)?;
        Ok(VitalRates::new(gamma, mu, beta, self.grid.m)?.with_p_max(self.model.p_max))
    }

    /// Hex SHA-256 of the canonical JSON form.
    /// SHA-256 of the canonical JSON, ignoring the `output` section so that
    /// runs differing only in where they write share a hash.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
        }
        let bytes = serde_json::to_vec(&value).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Current value of the numeric field at the dotted `path`.
    pub fn number_at(&self, path: &str) -> Result<f64> {
        let mut root = serde_json::to_value(self).expect("config serializes");
        numeric_node(&mut root, path)?.as_f64().ok_or_else(|| config_error(path, "field is not numeric"))
    }

    /// Copy with the numeric field at the dotted `path` replaced by `value`.
    pub fn with_number(&self, path: &str, value: f64) -> Result<Self> {
        let mut root = serde_json::to_value(self).expect("config serializes");
        let node = numeric_node(&mut root, path)?;
        *node = if node.is_u64() {
            if !(value >= 0.0 && value.fract() == 0.0 && value < u64::MAX as f64) {
                return Err(config_error(path, format!("{value} is not a nonnegative integer")));
            }
            Value::from(value as u64)
        } else {
            serde_json::Number::from_f64(value)
                .map(Value::Number)
                .ok_or_else(|| config_error(path, format!("{value} is not a finite number")))?
        };
        Self::from_value(root)
    }

    /// The separable baseline on `[0, 1]`: `γ = μ = 1`, `β₁ = e² e^{−P}`, `β₂ = 1`.
    pub fn baseline(n_cells: usize) -> Self {
        Self {
            model: ModelConfig {
                gamma: SurfaceSpec::new("constant", &[("c", 1.0)]),
                mu: SurfaceSpec::new("constant", &[("c", 1.0)]),
                beta: BetaSpec::Separable {
                    beta1: SurfaceSpec::new("exp_decay_P", &[("a", std::f64::consts::E.powi(2)), ("k", 1.0)]),
                    beta2: SurfaceSpec::new("constant", &[("c", 1.0)]),
                },
                p_max: DEFAULT_P_MAX,
            },
            grid: GridConfig { m: 1.0, n_cells },
            equilibrium: EquilibriumConfig::default(),
            stability: StabilityConfig::default(),
            simulate: SimulateConfig::default(),
            verify: VerifyConfig::default(),
            output: OutputConfig::default(),
            seed: DEFAULT_VALIDATION_SEED,
        }
    }
}

fn numeric_node<'a>(root: &'a mut Value, path: &str) -> Result<&'a mut Value> {
    let mut node = root;
    for key in path.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(key),
            Value::Array(items) => key.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| config_error(path, "no such field"))?;
    }
    if !node.is_number() {
        return Err(config_error(path, "field is not numeric"));
    }
    Ok(node)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_round_trips_and_builds() {
        let cfg = RunConfig::baseline(200);
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let r = back.build_rates().unwrap();
        assert!(r.beta.is_separable());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::from_json("{"), Err(Error::Configuration { .. })));
        let mut v = serde_json::to_value(RunConfig::baseline(200)).unwrap();
        v["grid"]["bogus"] = Value::from(1);
        assert!(RunConfig::from_json(&v.to_string()).is_err());
        let mut cfg = RunConfig::baseline(4);
        assert!(matches!(cfg.check(), Err(Error::Configuration { field, .. }) if field == "grid.n_cells"));
        cfg.grid.n_cells = 50;
        cfg.model.gamma = SurfaceSpec::new("cubic", &[]);
        assert!(matches!(cfg.build_rates(), Err(Error::Configuration { field, .. }) if field.starts_with("model.gamma")));
    }

    #[test]
    fn numeric_override() {
        let cfg = RunConfig::baseline(50);
        let a = cfg.with_number("model.beta.beta1.params.a", 7.0).unwrap();
        match &a.model.beta {
            BetaSpec::Separable { beta1, .. } => assert_eq!(beta1.params["a"], 7.0),
            _ => unreachable!(),
        }
        assert_ne!(a.hash(), cfg.hash());
        assert_eq!(cfg.number_at("grid.m").unwrap(), 1.0);
        assert!(cfg.number_at("model.nope").is_err());
        assert!(cfg.with_number("model.beta.beta1.params.zz", 1.0).is_err());
        assert!(cfg.with_number("model.gamma.family", 1.0).is_err());
        assert!(cfg.with_number("grid.n_cells", 2.0).is_err());
        assert_eq!(cfg.with_number("grid.n_cells", 64.0).unwrap().grid.n_cells, 64);
    }
}
