use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("index {index} out of range (max {max})")]
    OutOfRange { index: usize, max: usize },

    #[error("unknown generator kind `{0}`")]
    InvalidKind(String),

    #[error("root bracketing failed: found {found} of {expected} eigenvalues after {refinements} grid refinements")]
    RootBracketing {
        found: usize,
        expected: usize,
        refinements: usize,
    },

    #[error(
        "cancellation failed at order {order}, hermite degree {degree}: remainder {remainder:e} exceeds {tolerance:e}"
    )]
    Cancellation {
        order: usize,
        degree: usize,
        remainder: f64,
        tolerance: f64,
    },

    #[error("field truncation overflow: degree {needed} exceeds capacity {capacity}")]
    Truncation { needed: usize, capacity: usize },

    #[error("reduced-rate queue unstable: epsilon {epsilon} must be below (1 - rho)/m = {threshold}")]
    ReducedRateUnstable { epsilon: f64, threshold: f64 },

    #[error("kappa series diverges at epsilon {epsilon:e}: ratio test at j = {j_max} gives {ratio:.4}; convergence requires epsilon < {threshold:e}")]
    KappaDivergence {
        epsilon: f64,
        j_max: usize,
        ratio: f64,
        threshold: f64,
    },

    #[error("kappa series tail {tail:e} is not below 1% of the partial sum {sum:e}")]
    KappaTail { tail: f64, sum: f64 },

    #[error("negative service rate {rate} at grid point x = {x}; narrow the grid or reduce epsilon")]
    NegativeRate { rate: f64, x: f64 },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("unbounded linear modulator cannot be simulated; use the CTMC oracle instead")]
    UnboundedModulator,

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
