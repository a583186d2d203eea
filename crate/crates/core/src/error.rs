use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("no sign change on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    Convergence { what: String, iterations: usize },

    #[error("non-finite function value at x = {at}")]
    Evaluation { at: f64 },

    #[error("|F| = {magnitude:e} on the rectangle boundary near {at}; perturb the rectangle")]
    BoundaryZero { at: Complex64, magnitude: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error in `{field}`: {reason}")]
    Configuration { field: String, reason: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("route error: {0}")]
    Route(String),

    #[error("dominant eigenvalue {dominant} is not real; spectrum head: {head:?}")]
    SpectralAnomaly { dominant: Complex64, head: Vec<Complex64> },

    #[error("range error: {0}")]
    Range(String),

    #[error("linearization mismatch at ({row}, {col}): assembled {assembled}, finite difference {numerical}")]
    Assembly { row: usize, col: usize, assembled: f64, numerical: f64 },

    #[error("time step {dt} exceeds the admissible bound {admissible}")]
    StepSize { dt: f64, admissible: f64 },

    #[error("time step underflow at t = {time} (dt = {dt:e})")]
    Stiffness { time: f64, dt: f64 },

    #[error("growth-rate fit failed: {0}")]
    Fit(String),

    #[error("deviation changes sign inside the fit window (oscillatory mode)")]
    Oscillation { envelope: Option<crate::simulator::GrowthFit> },

    #[error("routes disagree: matrix eigenvalue {matrix}, characteristic root {characteristic}; refine the grid")]
    Inconsistency { matrix: Complex64, characteristic: Complex64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
