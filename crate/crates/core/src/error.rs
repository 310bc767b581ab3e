use thiserror::Error;

/// Errors produced by the simulation core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("invalid initial mode {0}; expected 1 or 2")]
    InvalidMode(i64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("state norm {norm_sqr} deviates from 1 by more than {tol:e}")]
    NotNormalized { norm_sqr: f64, tol: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t} before reaching t = {target}")]
    StepBudgetExhausted { t: f64, target: f64, max_steps: usize },

    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error(
        "transition probability not converged: doubling the window to half-width {half_width} \
         still changed it by {change:e}; increase |t_end|"
    )]
    WindowNotConverged { half_width: f64, change: f64 },

    #[error("{quantity} is undefined: {reason}")]
    Undefined {
        quantity: &'static str,
        reason: &'static str,
    },

    #[error("polynomial root finder did not converge (max residual {residual:e})")]
    RootFinder { residual: f64 },

    #[error("no swallow tail: |g| = {g} does not exceed 2J = {two_j}")]
    NoSwallowTail { g: f64, two_j: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("positivity violated: minimal eigenvalue {min_eigenvalue:e} at t = {t}")]
    PositivityViolation { t: f64, min_eigenvalue: f64 },

    #[error("all {0} ensemble members failed to integrate")]
    EnsembleFailed(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
