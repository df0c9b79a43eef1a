use thiserror::Error;

pub type Result<T, E = SeeError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SeeError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("argument outside the domain: {0}")]
    Domain(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{what} is rank deficient (condition number {condition:.3e})")]
    RankDeficient { what: String, condition: f64 },
    #[error("singular matrix: {0}")]
    SingularMatrix(String),
    #[error("kernel violates 1 - int G^2 > 0 (got {0:.6e})")]
    KernelCondition(f64),
    #[error("singular Jacobian at bandwidth {h:.6e}: no observation inside the kernel window")]
    SingularJacobian { h: f64 },
    #[error("solver stalled at bandwidth {h:.6e} with moment norm {moment_norm:.3e}")]
    Stalled { h: f64, moment_norm: f64 },
    #[error("solver did not converge after {iterations} iterations (moment norm {moment_norm:.3e})")]
    MaxIterations { iterations: usize, moment_norm: f64 },
    #[error("the smoothed criterion estimator requires Z = X (exogenous regressors)")]
    EndogenousNotSupported,
    #[error("bias term E(B)'E(B) is zero; apply the zero-derivative substitution first")]
    ZeroBias,
    #[error("no parametric residual fit converged")]
    AllFitsFailed,
    #[error("density fit failed: {0}")]
    FitFailed(String),
    #[error("density is not finite around zero")]
    DensityNotFinite,
    #[error("unknown kernel `{0}` (expected horowitz4, epanechnikov2 or uniform2)")]
    UnknownKernel(String),
    #[error("unknown DGP `{0}`")]
    UnknownDgp(String),
}
