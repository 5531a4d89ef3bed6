use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("pair is not stabilizable: {0}")]
    NotStabilizable(String),

    #[error("matrix is not Schur stable (spectral radius {0:.6})")]
    Unstable(f64),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("no feasible H-infinity level in [{lo}, {hi}]")]
    HinfInfeasible { lo: f64, hi: f64 },

    #[error("terminal set is empty: {0}")]
    EmptyTerminalSet(String),

    #[error("invariant set iteration did not converge after {iterations} iterations ({rows} rows)")]
    InvariantSetNotConverged { iterations: usize, rows: usize },

    #[error("simulation fault at step {step}: {message}")]
    SimulationFault { step: usize, message: String },

    #[error("identification failed: {0}")]
    IdentificationFailed(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Invalid(_) => "invalid-input",
            Error::NotStabilizable(_) => "not-stabilizable",
            Error::Unstable(_) => "unstable",
            Error::Numeric(_) => "numeric",
            Error::HinfInfeasible { .. } => "hinf-infeasible",
            Error::EmptyTerminalSet(_) => "empty-terminal-set",
            Error::InvariantSetNotConverged { .. } => "invariant-set-not-converged",
            Error::SimulationFault { .. } => "simulation-fault",
            Error::IdentificationFailed(_) => "identification-failed",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}
