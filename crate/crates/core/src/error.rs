use thiserror::Error;

/// Failures raised by the solvers and their setup routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular coupling{} (separation {separation:.3e} wavelengths)", pair_label(.pair))]
    Singularity {
        pair: Option<(usize, usize)>,
        separation: f64,
    },

    #[error("kernel argument out of domain: s = {0}")]
    Domain(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("numerical consistency violated: {what} has imaginary residue {residue:.3e}")]
    Consistency { what: &'static str, residue: f64 },

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("no steady state by t = {t_max}: last relative change {residual:.3e}")]
    SteadyState { t_max: f64, residual: f64 },

    #[error("detection projection is degenerate (norm = {norm:.3e})")]
    ProjectionDegenerate { norm: f64 },

    #[error("fit did not converge after {iterations} iterations (residual {residual:.3e})")]
    FitFailure { iterations: usize, residual: f64 },

    #[error("eigensolver failure: {0}")]
    Eigen(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}

fn pair_label(pair: &Option<(usize, usize)>) -> String {
    match pair {
        Some((a, b)) => format!(" between atoms {a} and {b}"),
        None => String::new(),
    }
}
