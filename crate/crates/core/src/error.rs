use thiserror::Error;

/// Errors raised by the Volt/VAR toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("feeder topology contains a cycle through bus {0}")]
    CycleDetected(String),
    #[error("line to bus {0} has non-positive reactance {1}")]
    NonPositiveReactance(String, f64),
    #[error("line to bus {0} has negative resistance {1}")]
    NegativeResistance(String, f64),
    #[error("bus {bus} references unknown parent {parent}")]
    DisconnectedBus { bus: String, parent: String },
    #[error("duplicate bus id {0}")]
    DuplicateBus(String),
    #[error("unknown bus id {0}")]
    UnknownBus(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sensitivity matrix X is not positive definite")]
    NotPositiveDefinite,
    #[error("inverse slope c must be positive, got {0}")]
    NonPositiveC(f64),
    #[error("inverter at bus {0} has zero reactive capability")]
    ZeroCapability(String),
    #[error("invalid rule parameters: {0}")]
    InvalidRule(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("feasible set is empty: {0}")]
    Infeasible(String),
    #[error("projection stalled after {iterations} iterations (primal {primal:.3e}, dual {dual:.3e})")]
    SolverStalled {
        iterations: usize,
        primal: f64,
        dual: f64,
    },
    #[error("{solver} hit the iteration cap ({iterations}) with residual {residual:.3e}")]
    MaxIterations {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("implicit-gradient system is singular")]
    SingularSystem,
    #[error("AC power flow diverged after {0} sweeps")]
    Diverged(usize),
    #[error("dynamics did not settle within {0} steps")]
    NotConverged(usize),
    #[error("scenario set is empty")]
    NoScenarios,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Whether the error stems from malformed or inconsistent user input
    /// rather than from a numerical solver.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::SolverStalled { .. }
                | Error::MaxIterations { .. }
                | Error::SingularSystem
                | Error::Diverged(_)
                | Error::NotConverged(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
