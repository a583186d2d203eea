//! `sizestruct` command line: validate, equilibrium, stability, simulate,
//! verify and sweep, all driven by a JSON [`RunConfig`].

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Format, GridConfig, RouteChoice, RunConfig};
use crate::equilibrium::{
    assemble_b_p, net_reproduction, rightmost_real_eigenvalue, solve_equilibrium_general,
    solve_equilibrium_separable, EquilibriumSolution, Route, SCAN_SAMPLES,
};
use crate::error::{Error, Result};
use crate::numerics::{scan_points, SizeGrid};
use crate::rates::{validate_rates, ValidationOptions, VitalRates};
use crate::simulator::{measure_growth_rate, perturb_equilibrium, simulate, PopulationState, SimulationTrace};
use crate::stability::{spectral_verdict_in, SpectralReport, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_NO_EQUILIBRIUM: i32 = 4;
pub const EXIT_ROUTE: i32 = 5;
pub const EXIT_INCONSISTENCY: i32 = 6;
pub const EXIT_STIFFNESS: i32 = 7;
pub const EXIT_VERIFICATION: i32 = 8;

#[derive(Debug, Parser)]
#[command(name = "sizestruct", version, about = "Equilibria, stability and simulation of size-structured populations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `grid.n_cells`.
    #[arg(long)]
    pub grid_cells: Option<usize>,
    /// Overrides `output.directory`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Format of tabular outputs; reports are always JSON.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check signs, derivatives and irreducibility of the rates.
    Validate(CommonArgs),
    /// Find positive equilibria.
    Equilibrium(CommonArgs),
    /// Linearized stability of every equilibrium.
    Stability(CommonArgs),
    /// Integrate the model in time.
    Simulate(CommonArgs),
    /// End-to-end consistency checks on `n` and `2n` cells.
    Verify(CommonArgs),
    /// Equilibrium and stability over values of one numeric config field.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Dotted path of the field, e.g. `model.beta.beta1.params.a`.
        #[arg(long)]
        param: String,
        /// Comma-separated values; may be empty.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
    },
}

/// Exit code for an error that aborts a command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Configuration { .. } | Error::Io(_) => EXIT_CONFIG,
        Error::Model(_) => EXIT_VALIDATION,
        Error::Route(_) => EXIT_ROUTE,
        Error::Inconsistency { .. } => EXIT_INCONSISTENCY,
        Error::Stiffness { .. } => EXIT_STIFFNESS,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Validate(a) => cmd_validate(&mut Session::open(&a)?),
        Command::Equilibrium(a) => cmd_equilibrium(&mut Session::open(&a)?),
        Command::Stability(a) => cmd_stability(&mut Session::open(&a)?),
        Command::Simulate(a) => cmd_simulate(&mut Session::open(&a)?),
        Command::Verify(a) => cmd_verify(&mut Session::open(&a)?),
        Command::Sweep { common, param, values } => cmd_sweep(&mut Session::open(&common)?, &param, &values),
    }
}

/// Loaded configuration plus output plumbing for one command.
pub struct Session {
    pub config: RunConfig,
    pub hash: String,
    out: PathBuf,
    timings: Vec<(String, f64)>,
    started: Instant,
}

impl Session {
    pub fn open(args: &CommonArgs) -> Result<Self> {
        let mut config = RunConfig::load(&args.config)?;
        if let Some(n) = args.grid_cells {
            config.grid.n_cells = n;
        }
        if let Some(out) = &args.out {
            config.output.directory = out.to_string_lossy().into_owned();
        }
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        if let Some(f) = args.format {
            config.output.formats = vec![match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            }];
        }
        config.check()?;
        Self::from_config(config)
    }

    pub fn from_config(config: RunConfig) -> Result<Self> {
        let out = PathBuf::from(&config.output.directory);
        fs::create_dir_all(&out)?;
        Ok(Self { hash: config.hash(), config, out, timings: Vec::new(), started: Instant::now() })
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push((stage.to_string(), (now - self.started).as_secs_f64()));
        self.started = now;
    }

    fn tag(&self, body: Value) -> Value {
        let mut v = json!({ "config_hash": self.hash, "grid": grid_value(&self.config.grid) });
        if let (Value::Object(head), Value::Object(rest)) = (&mut v, body) {
            head.extend(rest);
        }
        v
    }

    fn write_report(&self, name: &str, body: Value) -> Result<Value> {
        let v = self.tag(body);
        fs::write(self.out.join(name), pretty(&v))?;
        Ok(v)
    }

    fn write_table(&self, stem: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        for format in &self.config.output.formats {
            match format {
                Format::Csv => write_csv(&self.out.join(format!("{stem}.csv")), header, rows)?,
                Format::Json => {
                    let records: Vec<Value> = rows
                        .iter()
                        .map(|r| Value::Object(header.iter().zip(r).map(|(h, c)| (h.to_string(), cell_value(c))).collect()))
                        .collect();
                    fs::write(self.out.join(format!("{stem}.json")), pretty(&self.tag(json!({ "rows": records }))))?;
                }
            }
        }
        Ok(())
    }

    fn finish(&mut self, command: &str) -> Result<()> {
        self.lap("finish");
        let stages: serde_json::Map<String, Value> =
            self.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        fs::write(self.out.join("timings.json"), pretty(&json!({ "command": command, "seconds": stages })))?;
        Ok(())
    }
}

fn grid_value(g: &GridConfig) -> Value {
    json!({ "m": g.m, "n_cells": g.n_cells })
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

fn cell_value(c: &str) -> Value {
    if c.is_empty() {
        return Value::Null;
    }
    c.parse::<f64>().ok().and_then(serde_json::Number::from_f64).map_or_else(|| Value::from(c), Value::Number)
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

fn print(v: &Value) {
    print!("{}", pretty(v));
}

fn probes(rates: &VitalRates) -> Vec<f64> {
    [0.0, 1.0, 10.0, rates.p_max].into_iter().filter(|p| *p <= rates.p_max).collect()
}

/// Equilibria from the configured route; `auto` picks the separable route
/// when the kernel allows it.
pub fn solve(cfg: &RunConfig, rates: &VitalRates, grid: &SizeGrid) -> Result<Vec<EquilibriumSolution>> {
    match resolve_route(cfg.equilibrium.route, rates) {
        Route::Separable => solve_equilibrium_separable(rates, grid, cfg.p_range()),
        Route::General => solve_equilibrium_general(rates, grid, cfg.p_range()),
    }
}

fn resolve_route(choice: RouteChoice, rates: &VitalRates) -> Route {
    match choice {
        RouteChoice::Separable => Route::Separable,
        RouteChoice::General => Route::General,
        RouteChoice::Auto if rates.beta.is_separable() => Route::Separable,
        RouteChoice::Auto => Route::General,
    }
}

/// `R(P)` or `λ_P` on the scan points, for diagnosing a missing equilibrium.
fn scan_table(cfg: &RunConfig, rates: &VitalRates, grid: &SizeGrid) -> Vec<(f64, f64)> {
    let (lo, hi) = cfg.p_range();
    let route = resolve_route(cfg.equilibrium.route, rates);
    scan_points(lo, hi, SCAN_SAMPLES)
        .into_par_iter()
        .map(|p| {
            let v = match route {
                Route::Separable => net_reproduction(rates, grid, p),
                Route::General => assemble_b_p(rates, grid, p).and_then(|b| rightmost_real_eigenvalue(&b.entries)),
            };
            (p, v.unwrap_or(f64::NAN))
        })
        .collect()
}

fn equilibrium_rows(eqs: &[EquilibriumSolution]) -> Vec<Vec<String>> {
    eqs.iter()
        .map(|e| {
            vec![
                num(e.pop_star),
                opt(e.p_bar_star),
                num(e.residual_stationary),
                num(e.residual_total),
                e.route.to_string(),
            ]
        })
        .collect()
}

pub fn cmd_validate(session: &mut Session) -> Result<i32> {
    let rates = session.config.build_rates()?;
    let grid = session.config.grid()?;
    let options = ValidationOptions { seed: session.config.seed, ..ValidationOptions::default() };
    let report = validate_rates(&rates, &grid, &probes(&rates), &options);
    session.lap("validate");
    let v = session.write_report(
        "validation.json",
        json!({ "mandatory_pass": report.mandatory_pass(), "all_pass": report.all_pass(), "report": to_json(&report) }),
    )?;
    print(&v);
    session.finish("validate")?;
    Ok(if report.mandatory_pass() { EXIT_OK } else { EXIT_VALIDATION })
}

fn equilibria_or_report(session: &mut Session, rates: &VitalRates, grid: &SizeGrid) -> Result<Option<Vec<EquilibriumSolution>>> {
    let eqs = solve(&session.config, rates, grid)?;
    session.lap("equilibrium");
    if !eqs.is_empty() {
        return Ok(Some(eqs));
    }
    let scan = scan_table(&session.config, rates, grid);
    let label = match resolve_route(session.config.equilibrium.route, rates) {
        Route::Separable => "R",
        Route::General => "lambda",
    };
    let rows: Vec<Vec<String>> = scan.iter().map(|(p, v)| vec![num(*p), num(*v)]).collect();
    session.write_table("scan", &["P", label], &rows)?;
    let v = session.write_report(
        "no_equilibrium.json",
        json!({ "status": "no_equilibrium", "P_range": session.config.p_range(),
                "scan": scan.iter().map(|(p, v)| json!({ "P": p, label: v })).collect::<Vec<_>>() }),
    )?;
    eprintln!("no positive equilibrium in {:?}", session.config.p_range());
    print(&v);
    Ok(None)
}

pub fn cmd_equilibrium(session: &mut Session) -> Result<i32> {
    let rates = session.config.build_rates()?;
    let grid = session.config.grid()?;
    let Some(eqs) = equilibria_or_report(session, &rates, &grid)? else {
        session.finish("equilibrium")?;
        return Ok(EXIT_NO_EQUILIBRIUM);
    };
    session.write_table(
        "equilibria",
        &["P_star", "P_bar_star", "residual_stationary", "residual_total", "route"],
        &equilibrium_rows(&eqs),
    )?;
    for (k, e) in eqs.iter().enumerate() {
        let rows: Vec<Vec<String>> =
            grid.midpoints().iter().zip(&e.density).map(|(s, p)| vec![num(*s), num(*p)]).collect();
        let stem = if k == 0 { "profile".to_string() } else { format!("profile_{k}") };
        session.write_table(&stem, &["s", "p_star"], &rows)?;
    }
    let summary: Vec<Value> = eqs
        .iter()
        .map(|e| {
            json!({ "P_star": e.pop_star, "P_bar_star": e.p_bar_star, "route": e.route,
                    "residual_stationary": e.residual_stationary, "residual_total": e.residual_total })
        })
        .collect();
    let v = session.write_report("equilibria_report.json", json!({ "equilibria": summary }))?;
    print(&v);
    session.finish("equilibrium")?;
    Ok(EXIT_OK)
}

pub fn cmd_stability(session: &mut Session) -> Result<i32> {
    let rates = session.config.build_rates()?;
    let grid = session.config.grid()?;
    let Some(eqs) = equilibria_or_report(session, &rates, &grid)? else {
        session.finish("stability")?;
        return Ok(EXIT_NO_EQUILIBRIUM);
    };
    let region = session.config.stability.region;
    let reports: Vec<Value> = eqs
        .iter()
        .map(|e| {
            let r = spectral_verdict_in(&rates, e, &grid, region)?;
            Ok(json!({ "P_star": e.pop_star, "route": e.route, "report": to_json(&r) }))
        })
        .collect::<Result<_>>()?;
    session.lap("stability");
    let v = session.write_report("stability.json", json!({ "equilibria": reports }))?;
    print(&v);
    session.finish("stability")?;
    Ok(EXIT_OK)
}

/// Equilibrium of the discrete dynamics; the general route solves the
/// simulator's own stationary problem.
fn simulation_equilibrium(cfg: &RunConfig, rates: &VitalRates, grid: &SizeGrid) -> Result<Option<EquilibriumSolution>> {
    Ok(solve_equilibrium_general(rates, grid, cfg.p_range())?.into_iter().next())
}

struct SimulationRun {
    trace: SimulationTrace,
    equilibrium: Option<EquilibriumSolution>,
}

fn run_simulation(cfg: &RunConfig, rates: &VitalRates, grid: &SizeGrid) -> Result<Option<SimulationRun>> {
    let sim = &cfg.simulate;
    let (density, equilibrium) = match sim.initial.perturbation_mode(cfg.seed) {
        Some((amplitude, mode)) => {
            let Some(eq) = simulation_equilibrium(cfg, rates, grid)? else {
                return Ok(None);
            };
            (perturb_equilibrium(rates, &eq, grid, amplitude, mode)?, Some(eq))
        }
        None => (sim.initial.profile(grid)?.expect("profile initial data"), None),
    };
    let state = PopulationState::new(grid.clone(), density, 0.0)
        .map_err(|e| Error::Configuration { field: "simulate.initial".into(), reason: e.to_string() })?;
    let trace = simulate(&state, rates, sim.t_end, sim.cadence)?;
    Ok(Some(SimulationRun { trace, equilibrium }))
}

fn growth_summary(trace: &SimulationTrace, p_star: f64, window: (f64, f64)) -> Value {
    match measure_growth_rate(trace, p_star, window) {
        Ok(fit) => json!({ "window": window, "rate": fit.rate, "residual": fit.residual }),
        Err(Error::Oscillation { envelope }) => {
            json!({ "window": window, "oscillating": true, "envelope": envelope.map(|f| to_json(&f)) })
        }
        Err(e) => json!({ "window": window, "error": e.to_string() }),
    }
}

pub fn cmd_simulate(session: &mut Session) -> Result<i32> {
    let rates = session.config.build_rates()?;
    let grid = session.config.grid()?;
    let Some(run) = run_simulation(&session.config, &rates, &grid)? else {
        eprintln!("perturbation run needs an equilibrium; none found");
        session.finish("simulate")?;
        return Ok(EXIT_NO_EQUILIBRIUM);
    };
    session.lap("simulate");
    let tr = &run.trace;
    let rows: Vec<Vec<String>> = tr.times.iter().zip(&tr.totals).map(|(t, p)| vec![num(*t), num(*p)]).collect();
    session.write_table("trace", &["time", "P"], &rows)?;
    if !tr.snapshots.is_empty() {
        let rows: Vec<Vec<String>> = tr
            .snapshots
            .iter()
            .flat_map(|snap| {
                grid.midpoints().iter().zip(&snap.density).map(move |(s, d)| vec![num(snap.time), num(*s), num(*d)])
            })
            .collect();
        session.write_table("snapshots", &["time", "s", "density"], &rows)?;
    }
    let mut summary = json!({
        "t_end": session.config.simulate.t_end,
        "steps": tr.times.len() - 1,
        "final_P": tr.totals.last(),
        "max_mass_balance_residual": tr.max_mass_balance_residual(),
    });
    if let Some(eq) = &run.equilibrium {
        summary["P_star"] = json!(eq.pop_star);
        if session.config.simulate.t_end > 0.0 {
            summary["growth"] = growth_summary(tr, eq.pop_star, session.config.simulate.window());
        }
    }
    let v = session.write_report("simulation.json", summary)?;
    print(&v);
    session.finish("simulate")?;
    Ok(EXIT_OK)
}

/// One row of the verification table.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub check: String,
    pub n_cells: usize,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    /// `pass`, `fail` or `n/a`.
    pub status: String,
    pub note: String,
}

impl Check {
    fn new(check: &str, n: usize, value: Option<f64>, tolerance: Option<f64>, pass: Option<bool>, note: impl Into<String>) -> Self {
        let status = match pass {
            Some(true) => "pass",
            Some(false) => "fail",
            None => "n/a",
        };
        Self { check: check.into(), n_cells: n, value, tolerance, status: status.into(), note: note.into() }
    }

    fn bounded(check: &str, n: usize, value: f64, tolerance: f64, note: impl Into<String>) -> Self {
        Self::new(check, n, Some(value), Some(tolerance), Some(value <= tolerance), note)
    }

    pub fn failed(&self) -> bool {
        self.status == "fail"
    }
}

/// Largest `|P − P*|` over the first and the last tenth of the run.
fn early_late_deviation(trace: &SimulationTrace, p_star: f64) -> (f64, f64) {
    let t_end = *trace.times.last().unwrap();
    let t0 = trace.times[0];
    let span = t_end - t0;
    let dev = |lo: f64, hi: f64| {
        trace
            .times
            .iter()
            .zip(&trace.totals)
            .filter(|(t, _)| **t >= lo && **t <= hi)
            .fold(0.0f64, |m, (_, p)| m.max((p - p_star).abs()))
    };
    (dev(t0, t0 + 0.1 * span), dev(t_end - 0.1 * span, t_end))
}

/// Measured rate against the matrix eigenvalue when the latter is an isolated
/// real mode confirmed by the characteristic route; otherwise only the
/// direction of the deviation is compared with the verdict.
fn growth_check(cfg: &RunConfig, n: usize, h: f64, report: &SpectralReport, separable: bool, trace: &SimulationTrace, p_star: f64) -> Check {
    let tol = cfg.verify.growth_rate.unwrap_or((10.0 * h).max(0.05));
    let cross_tol = (10.0 * h).max(5e-2);
    let dom = report.dominant_matrix_eig;
    let confirmed = if separable { report.cross_check_gap.is_some_and(|g| g <= cross_tol) } else { true };
    if dom.im == 0.0 && confirmed {
        let fit = match measure_growth_rate(trace, p_star, cfg.simulate.window()) {
            Ok(f) => Ok(f),
            Err(Error::Oscillation { envelope: Some(f) }) => Ok(f),
            Err(e) => Err(e),
        };
        return match fit {
            Ok(f) => Check::bounded("growth_rate", n, (f.rate - dom.re).abs(), tol, format!("measured {} vs eigenvalue {}", f.rate, dom.re)),
            Err(e) => Check::new("growth_rate", n, None, Some(tol), Some(false), e.to_string()),
        };
    }
    let (early, late) = early_late_deviation(trace, p_star);
    let ratio = late / early;
    let note = format!("no isolated real mode; deviation ratio late/early = {ratio:e}, verdict {}", report.verdict);
    let pass = match report.verdict {
        Verdict::Stable => Some(late < early),
        Verdict::Unstable => Some(late > early),
        Verdict::Inconclusive => None,
    };
    Check::new("growth_direction", n, Some(ratio), None, pass, note)
}

struct GridResult {
    p_general: Option<f64>,
    report: Option<Value>,
}

fn verify_grid(cfg: &RunConfig, rates: &VitalRates, n: usize, checks: &mut Vec<Check>) -> Result<GridResult> {
    let grid = SizeGrid::uniform(cfg.grid.m, n)?;
    let h = grid.h_max();
    let mut out = GridResult { p_general: None, report: None };
    let Some(eq) = solve_equilibrium_general(rates, &grid, cfg.p_range())?.into_iter().next() else {
        checks.push(Check::new("equilibrium", n, None, None, Some(false), "no equilibrium on the general route"));
        return Ok(out);
    };
    out.p_general = Some(eq.pop_star);
    let separable = rates.beta.is_separable();
    if separable {
        match solve_equilibrium_separable(rates, &grid, cfg.p_range())?.first() {
            Some(s) => checks.push(Check::bounded(
                "route_agreement",
                n,
                (s.pop_star - eq.pop_star).abs(),
                cfg.verify.route_agreement,
                format!("separable {} vs general {}", s.pop_star, eq.pop_star),
            )),
            None => checks.push(Check::new("route_agreement", n, None, None, Some(false), "separable route found no equilibrium")),
        }
    } else {
        checks.push(Check::new("route_agreement", n, None, None, None, "kernel is not separable"));
    }

    let report = match spectral_verdict_in(rates, &eq, &grid, cfg.stability.region) {
        Ok(r) => r,
        Err(e @ (Error::Assembly { .. } | Error::Inconsistency { .. })) => {
            checks.push(Check::new("stability", n, None, None, Some(false), e.to_string()));
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    checks.push(Check::bounded("jacobian", n, report.jacobian_residual, cfg.verify.jacobian, "relative max norm"));
    let cross_tol = (10.0 * h).max(5e-2);
    checks.push(match report.cross_check_gap {
        Some(g) => Check::bounded("spectral_cross_check", n, g, cross_tol, "rightmost characteristic root vs matrix"),
        None => Check::new("spectral_cross_check", n, None, Some(cross_tol), None, "no characteristic root in the search region"),
    });

    match run_simulation(cfg, rates, &grid)? {
        Some(run) => {
            let tr = &run.trace;
            checks.push(Check::bounded("mass_balance", n, tr.max_mass_balance_residual(), cfg.verify.mass_balance, "max per-step residual"));
            match &run.equilibrium {
                Some(e) => checks.push(growth_check(cfg, n, h, &report, separable, tr, e.pop_star)),
                None => checks.push(Check::new("growth_rate", n, None, None, None, "initial data is not a perturbation")),
            }
        }
        None => checks.push(Check::new("simulation", n, None, None, Some(false), "no equilibrium to perturb")),
    }
    out.report = Some(json!({ "n_cells": n, "P_star": eq.pop_star, "spectral": to_json(&report) }));
    Ok(out)
}

pub fn cmd_verify(session: &mut Session) -> Result<i32> {
    let cfg = session.config.clone();
    let rates = cfg.build_rates()?;
    let grid = cfg.grid()?;
    let options = ValidationOptions { seed: cfg.seed, ..ValidationOptions::default() };
    let validation = validate_rates(&rates, &grid, &probes(&rates), &options);
    if !validation.mandatory_pass() {
        eprintln!("mandatory rate checks failed");
        return Ok(EXIT_VALIDATION);
    }
    session.lap("validate");
    let n = cfg.grid.n_cells;
    let mut checks = Vec::new();
    let mut per_grid = Vec::new();
    let mut p_general = Vec::new();
    for cells in [n, 2 * n] {
        let r = verify_grid(&cfg, &rates, cells, &mut checks)?;
        session.lap(&format!("grid_{cells}"));
        p_general.push(r.p_general);
        per_grid.extend(r.report);
    }
    checks.push(match (p_general[0], p_general[1]) {
        (Some(a), Some(b)) => Check::bounded("grid_agreement", n, (a - b).abs(), cfg.verify.grid_agreement, format!("P* on {n} vs {} cells", 2 * n)),
        _ => Check::new("grid_agreement", n, None, None, Some(false), "equilibrium missing on a grid"),
    });

    let rows: Vec<Vec<String>> = checks
        .iter()
        .map(|c| vec![c.check.clone(), c.n_cells.to_string(), opt(c.value), opt(c.tolerance), c.status.clone(), c.note.clone()])
        .collect();
    session.write_table("verify", &["check", "n_cells", "value", "tolerance", "status", "note"], &rows)?;
    let failures: Vec<&Check> = checks.iter().filter(|c| c.failed()).collect();
    let v = session.write_report(
        "report.json",
        json!({
            "version": env!("CARGO_PKG_VERSION"),
            "config": to_json(&cfg),
            "validation": to_json(&validation),
            "grids": per_grid,
            "checks": to_json(&checks),
            "passed": failures.is_empty(),
        }),
    )?;
    print(&json!({ "config_hash": v["config_hash"], "grid": v["grid"], "checks": v["checks"], "passed": v["passed"] }));
    session.finish("verify")?;
    if failures.is_empty() {
        Ok(EXIT_OK)
    } else {
        for c in failures {
            eprintln!("FAILED {} (n = {}): {}", c.check, c.n_cells, c.note);
        }
        Ok(EXIT_VERIFICATION)
    }
}

struct SweepRow {
    cells: Vec<String>,
    p_star: Vec<f64>,
}

fn sweep_row(cfg: &RunConfig, param: &str, value: f64) -> SweepRow {
    let outcome = (|| -> Result<(Vec<f64>, Option<SpectralReport>)> {
        let cfg = cfg.with_number(param, value)?;
        let rates = cfg.build_rates()?;
        let grid = cfg.grid()?;
        let eqs = solve(&cfg, &rates, &grid)?;
        let report = match eqs.first() {
            Some(e) => Some(spectral_verdict_in(&rates, e, &grid, cfg.stability.region)?),
            None => None,
        };
        Ok((eqs.iter().map(|e| e.pop_star).collect(), report))
    })();
    let blank = String::new;
    match outcome {
        Ok((p_star, Some(r))) => SweepRow {
            cells: vec![
                num(value),
                p_star.len().to_string(),
                num(r.dominant_matrix_eig.re),
                num(r.dominant_matrix_eig.im),
                r.verdict.to_string(),
                "ok".into(),
            ],
            p_star,
        },
        Ok((p_star, None)) => SweepRow {
            cells: vec![num(value), "0".into(), blank(), blank(), blank(), "no_equilibrium".into()],
            p_star,
        },
        Err(e) => SweepRow {
            cells: vec![num(value), blank(), blank(), blank(), blank(), format!("error (exit {}): {e}", exit_code(&e))],
            p_star: Vec::new(),
        },
    }
}

pub fn cmd_sweep(session: &mut Session, param: &str, values: &str) -> Result<i32> {
    let values: Vec<f64> = values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<f64>().map_err(|_| Error::Configuration { field: "--values".into(), reason: format!("`{v}` is not a number") }))
        .collect::<Result<_>>()?;
    // the path must address a numeric field even when there is nothing to sweep
    session.config.number_at(param)?;
    let cfg = session.config.clone();
    let results: Vec<SweepRow> = values.par_iter().map(|&v| sweep_row(&cfg, param, v)).collect();
    session.lap("sweep");
    let rows: Vec<Vec<String>> = results.iter().map(|r| r.cells.clone()).collect();
    session.write_table("sweep", &["param", "equilibria_count", "dominant_eig_re", "dominant_eig_im", "verdict", "status"], &rows)?;
    let p_star: Vec<&Vec<f64>> = results.iter().map(|r| &r.p_star).collect();
    let v = session.write_report(
        "sweep_report.json",
        json!({ "param": param, "values": values, "rows": rows, "P_star": p_star }),
    )?;
    print(&v);
    session.finish("sweep")?;
    Ok(EXIT_OK)
}
