use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("field is not in {expected} representation")]
    WrongRepresentation { expected: &'static str },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("second derivative of F is singular at a sampled point (|s| or |p| vanishes)")]
    SingularHessian,
    #[error("amplitude a = {0:e} too close to zero")]
    DegenerateAmplitude(f64),
    #[error("iteration cap {cap} reached in {stage} (gradient norm {grad_norm:e})")]
    IterationCap {
        stage: &'static str,
        cap: usize,
        grad_norm: f64,
    },
    #[error("line search failed in {stage} after {backtracks} backtracks")]
    LineSearch { stage: &'static str, backtracks: usize },
    #[error("inner iterate pinned at the safe-region boundary after {0} projections")]
    BoundaryViolation(usize),
    #[error("coupling gamma = {gamma:e} is not admissible (binding margin {margin:e})")]
    InadmissibleCoupling { gamma: f64, margin: f64 },
    #[error("multiplier omega = {omega} outside (0, {mass})")]
    MultiplierOutOfWindow { omega: f64, mass: f64 },
    #[error("seed too wide for the box: |Lambda+ w_eps| = {0} <= 1/2")]
    SeedTooWide(f64),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
