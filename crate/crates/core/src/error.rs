use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric: max asymmetry {deviation:.3e} exceeds tolerance {tolerance:.3e}")]
    NotSymmetric { deviation: f64, tolerance: f64 },

    #[error("matrix is singular or nearly so: |det| = {det:.3e} is below the floor {floor:.3e}")]
    Singular { det: f64, floor: f64 },

    #[error("matrix is not Hurwitz: the Lyapunov solution is not positive definite")]
    NotHurwitz,

    #[error("Lyapunov solve left a residual of {residual:.3e}, above {limit:.3e}; the pair (A, Q) is too ill-conditioned")]
    LyapunovResidual { residual: f64, limit: f64 },

    #[error("invalid dither spec: {0}")]
    InvalidDither(String),

    #[error("invalid controller law: {0}")]
    InvalidLaw(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("probing frequencies violate the resonance conditions: {0}")]
    ResonantFrequencies(String),

    #[error("state diverged (NaN or overflow) at t = {time:.6} s")]
    Diverged { time: f64 },

    #[error("the gradient-law settling bound in original time requires the Hessian norm")]
    MissingHessianNorm,

    #[error("detection window of {window} s does not fit in the trajectory span of {span} s")]
    WindowTooLong { window: f64, span: f64 },

    #[error("trajectory is unusable for this analysis: {0}")]
    DegenerateTrajectory(String),
}

pub type Result<T> = std::result::Result<T, Error>;
