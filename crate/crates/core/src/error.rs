use thiserror::Error;

/// Errors produced by the simulation and estimation routines.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Malformed or out-of-contract input (bad dimensions, NaN data, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A quantity left its mathematical domain (negative variance, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The transition matrix has no unique stationary distribution.
    #[error("transition matrix is reducible: no unique stationary distribution")]
    ReducibleChain,

    /// A regime accumulated (numerically) zero posterior mass, so its
    /// transition row cannot be updated.
    #[error("degenerate regime {regime}: total pair weight {mass:.3e} below threshold")]
    DegenerateRegime { regime: usize, mass: f64 },

    /// Iterative solver hit its sweep budget before meeting tolerance.
    #[error("coordinate descent did not converge within {max_sweeps} sweeps (last delta {last_delta:.3e})")]
    LassoNonConvergence { max_sweeps: usize, last_delta: f64 },

    /// Log-density became non-finite (variance underflow or corrupt data).
    #[error("non-finite log-density at t={t}: {detail}")]
    NonFiniteDensity { t: usize, detail: String },

    /// Eigenvalue machinery could not certify the requested quantity.
    #[error("conditioning error: {0}")]
    Conditioning(String),

    /// Every fold or every initialization failed; nothing to select from.
    #[error("all candidates failed: {0}")]
    AllCandidatesFailed(String),

    /// More than half of the replications in some study cell failed.
    #[error("study failure: {0}")]
    StudyFailure(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
