use thiserror::Error;

/// Errors raised by the stateless model kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("shape function has no coefficients")]
    MalformedShape,
    #[error("pore profile is closed")]
    PoreClosed,
    #[error("flux must be positive, got {0}")]
    DegenerateFlow(f64),
    #[error("grid mismatch: expected {expected} nodes, found {found}")]
    GridMismatch { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Errors raised while time-stepping a filter.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("infeasible shape: a0({x}) = {value}")]
    InfeasibleShape { x: f64, value: f64 },
    #[error("initial inlet pressure {p0} exceeds cap {cap}")]
    InfeasibleStart { p0: f64, cap: f64 },
    #[error("purity undefined: all accumulative concentrations are zero")]
    UndefinedPurity,
    #[error("filter is exhausted")]
    FilterExhausted,
    #[error("filter did not exhaust within {0} steps")]
    NotExhausted(usize),
}

/// Errors raised by the optimizer layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("no fast objective exists for the constant-flux problem")]
    UnsupportedMethod,
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid search config: {0}")]
    InvalidSearch(String),
}

/// Errors raised by the multi-stage protocol.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StageError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid stage plan: {0}")]
    InvalidPlan(String),
}

impl From<ModelError> for OptError {
    fn from(e: ModelError) -> Self {
        OptError::Sim(SimError::Model(e))
    }
}

impl From<ModelError> for StageError {
    fn from(e: ModelError) -> Self {
        StageError::Sim(SimError::Model(e))
    }
}
