use std::fmt;

/// Failure classes of the front end, each with its own exit status.
#[derive(Debug, Clone)]
pub enum CliError {
    /// Unreadable file, TOML syntax or schema violation.
    Config(String),
    /// The chosen solver cannot run the configured scenario.
    Capability(String),
    Numerical(dipolar::Error),
    Io(String),
}

pub mod exit {
    pub const CONFIG: u8 = 3;
    pub const CAPABILITY: u8 = 4;
    pub const INTEGRATION: u8 = 5;
    pub const STEADY_STATE: u8 = 6;
    pub const PROJECTION: u8 = 7;
    pub const FIT: u8 = 8;
    pub const NUMERICAL: u8 = 9;
    pub const IO: u8 = 10;
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use dipolar::Error as E;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Capability(_) => exit::CAPABILITY,
            CliError::Io(_) => exit::IO,
            CliError::Numerical(e) => match e {
                E::InvalidArgument(_) | E::DimensionMismatch { .. } => exit::CONFIG,
                E::Integration { .. } => exit::INTEGRATION,
                E::SteadyState { .. } => exit::STEADY_STATE,
                E::ProjectionDegenerate { .. } => exit::PROJECTION,
                E::FitFailure { .. } => exit::FIT,
                _ => exit::NUMERICAL,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Capability(m) => write!(f, "solver capability: {m}"),
            CliError::Numerical(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "output error: {m}"),
        }
    }
}

impl From<dipolar::Error> for CliError {
    fn from(e: dipolar::Error) -> Self {
        CliError::Numerical(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
