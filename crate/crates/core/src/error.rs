use thiserror::Error;

/// Everything that can go wrong inside the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("coefficient `{label}` evaluated to a non-finite value at x = {x}")]
    CoefficientEvaluation { label: String, x: f64 },

    #[error("quadrature oracle did not converge: relative change {rel_change:.3e} > {tol:.1e} at order {order}")]
    OracleFailure { rel_change: f64, tol: f64, order: usize },

    #[error("regression basis is ill-conditioned at step {step}: condition number {condition:.3e}")]
    IllConditionedBasis { step: usize, condition: f64 },

    #[error("transformed terminal value is not finite on path {path}")]
    TerminalOverflow { path: usize },

    #[error("invalid comparison: {0}")]
    InvalidComparison(String),

    #[error("forward simulation blew up on path {path} at step {step}")]
    SimulationBlowup { path: usize, step: usize },

    #[error("Picard iteration diverged at step {step} (residual {residual:.3e})")]
    StepDivergence { step: usize, residual: f64 },

    #[error("non-finite solution value at step {step} on path {path}")]
    Blowup { step: usize, path: usize },

    #[error("PDE solution blew up at t = {t}, x = {x}")]
    PdeBlowup { t: f64, x: f64 },

    #[error("CFL condition violated: {0}")]
    Cfl(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("malformed path bundle file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
