use thiserror::Error;

/// Errors produced by the simulator, identifier, and solver layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Discretization produced a non-finite entry.
    #[error("discretization failed: {0}")]
    Discretization(String),

    /// Plant state became non-finite; carries the step index.
    #[error("simulation diverged at step {step}")]
    SimulationDiverged { step: usize },

    /// A caller broke an interface contract (dimension mismatch, bad bounds, ...).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// A numerical routine failed to produce a usable result.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Scenario configuration could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
