use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("pure power potential needs k >= 1 (got k = {0}); use the regularized form")]
    UnsupportedPotential(f64),
    #[error("energy must be positive (got {0})")]
    NonPositiveEnergy(f64),
    #[error("orbit failed to close: endpoint mismatch {0:e}")]
    OrbitDidNotClose(f64),
    #[error("right-hand side is not centred: orbit mean {0:e}")]
    NotCentred(f64),
    #[error("critical point: behaviour is not determined at these parameters")]
    Undetermined,
    #[error("no invariant probability measure")]
    NoInvariantMeasure,
    #[error("matrix is not stable: spectral abscissa {0}")]
    UnstableMatrix(f64),
    #[error("function is not monotone: {0}")]
    NotMonotone(String),
    #[error("integrator diverged at t = {0}")]
    Diverged(f64),
    #[error("not enough data: {0}")]
    InsufficientData(String),
    #[error("missing orbit tables: {0}")]
    MissingTables(String),
    #[error("non-finite generator at {0}")]
    NonFinite(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
