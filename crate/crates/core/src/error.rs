use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("flux is not differentiable at |xi| = {norm} when epsilon = 0")]
    SingularPoint { norm: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid: {0}")]
    Grid(String),

    #[error("shift {hstep} is not a nonzero integer multiple of the grid step {h}")]
    Alignment { hstep: f64, h: f64 },

    #[error("cylinder geometry: {0}")]
    Geometry(String),

    #[error("degenerate region: {0}")]
    DegenerateRegion(String),

    #[error("time step to level {level} failed at epsilon = {epsilon}: residual {residual:e}")]
    StepFailure {
        level: usize,
        epsilon: f64,
        residual: f64,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("expression: {0}")]
    Expr(String),

    #[error("format: {0}")]
    Format(String),

    #[error("linear solve: {0}")]
    Linear(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
