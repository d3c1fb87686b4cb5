use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HoroError {
    #[error("invalid dimension n = {0}; supported range is 3..=16")]
    InvalidDimension(usize),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input norm {norm} exceeds the validity radius {radius}")]
    OutOfRange { norm: f64, radius: f64 },
    #[error("Newton iteration did not converge after {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("matrix is not in the Lie algebra (defect {0:e})")]
    NotInAlgebra(f64),
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("degenerate distance: points {indices:?} coincide with the query point")]
    DegenerateDistance { indices: Vec<usize> },
    #[error("energy precondition fails at point {index} (energy {energy:e} > bound {bound:e})")]
    EnergyPrecondition { index: usize, energy: f64, bound: f64 },
    #[error("no admissible localization found: {trace}")]
    LocalizationFailure { trace: String },
    #[error("normalization error: {0}")]
    Normalization(String),
    #[error("resolution error: {0}")]
    Resolution(String),
    #[error("candidate set exhausted without an expanding subset: {0}")]
    CounterexampleFound(String),
    #[error("stage `{stage}` failed: {source}")]
    Stage { stage: String, source: Box<HoroError> },
    #[error("measure bound fails on interval [{lo}, {hi}] (mass {mass:e} > bound {bound:e})")]
    MeasureBound { lo: f64, hi: f64, mass: f64, bound: f64 },
    #[error("method mismatch: {0}")]
    MethodMismatch(String),
    #[error("quadrature refinement limit reached (estimated error {0:e})")]
    RefinementLimit(f64),
    #[error("threshold not reached below t = {0}")]
    Horizon(f64),
    #[error("reduction did not terminate after {steps} steps (matrix {matrix})")]
    ReductionStall { steps: usize, matrix: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("window violation: t = {t} outside [{lo}, {hi}]")]
    WindowViolation { t: f64, lo: f64, hi: f64 },
}

impl HoroError {
    pub fn at_stage(stage: &str, err: HoroError) -> HoroError {
        HoroError::Stage { stage: stage.to_string(), source: Box::new(err) }
    }
}

pub type Result<T> = std::result::Result<T, HoroError>;
