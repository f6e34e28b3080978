use thiserror::Error;

/// Failure modes shared by every stage of the determinant pipelines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("singular matrix: pivot {pivot:.3e} below threshold {threshold:.3e}")]
    SingularMatrix { pivot: f64, threshold: f64 },
    #[error("step size underflow at x = {x} (h = {h:.3e})")]
    StepUnderflow { x: f64, h: f64 },
    #[error("quadrature did not converge on [{a}, {b}] (error estimate {estimate:.3e})")]
    NoConvergence { a: f64, b: f64, estimate: f64 },
    #[error("leading coefficient is numerically singular at x = {x}")]
    SingularLeadingCoefficient { x: f64 },
    #[error("solution growth exceeds the overflow guard at shift {shift}")]
    OverflowRisk { shift: f64 },
    #[error("operation requires order >= 2, got order {order}")]
    OrderTooLow { order: usize },
    #[error("operation requires order {expected}, got order {order}")]
    WrongOrder { expected: usize, order: usize },
    #[error("ill-conditioned fit: condition number {condition:.3e}")]
    IllConditioned { condition: f64 },
    #[error("sampling window [{x_min:.3e}, {x_max:.3e}] spans fewer than {required} decades")]
    WindowTooSmall { x_min: f64, x_max: f64, required: f64 },
    #[error("boundary problem is not admissible: {0}")]
    NotAdmissible(String),
    #[error("boundary blocks not covered by the closed-form table")]
    CaseNotCovered,
    #[error("located {found} roots but the argument principle counts {counted}")]
    MissedRoots { found: usize, counted: usize },
    #[error("eigenvalue tail model misfit: relative residual {residual:.3e}")]
    TailMisfit { residual: f64 },
    #[error("unknown closed-form case `{0}`")]
    UnknownCase(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
