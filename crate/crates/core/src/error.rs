use thiserror::Error;

/// Failure modes of the solver and its building blocks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WhiskerError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite sample at grid point {index} (component {component})")]
    NonFinite { index: usize, component: usize },
    #[error("exact resonance at k = {k:?} (|k.omega - n| = {distance:e})")]
    Resonance { k: Vec<i64>, distance: f64 },
    #[error("near resonance at k = {k:?}: divisor {divisor:e} below floor {floor:e}")]
    NearResonance { k: Vec<i64>, divisor: f64, floor: f64 },
    #[error("right-hand side has non-zero average {average:e} (tolerance {tol:e})")]
    NonZeroAverage { average: f64, tol: f64 },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("embedding degenerate at grid point {index}: DK^T DK is singular")]
    EmbeddingDegenerate { index: usize },
    #[error("twist degeneracy in avg({which}): condition number {cond:e}")]
    TwistDegenerate { which: &'static str, cond: f64 },
    #[error("geometry degenerate: Neumann series for the symplectic Gram matrix diverges ({0})")]
    GeometryDegenerate(String),
    #[error("cohomology degeneracy: deformation family does not span H^1 (condition {cond:e})")]
    CohomologyDegenerate { cond: f64 },
    #[error("point escaped the domain at grid point {index}: coordinate {coord} = {value}")]
    DomainEscape { index: usize, coord: usize, value: f64 },
    #[error("splitting refinement diverged: {0}")]
    SplittingDiverged(String),
    #[error("hyperbolicity violated: {0}")]
    HyperbolicityViolated(String),
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },
    #[error("stagnation: residual ratio above {ratio} for {steps} consecutive steps (residual {residual:e})")]
    Stagnation { ratio: f64, steps: usize, residual: f64 },
    #[error("Newton iteration diverged (residual {residual:e})")]
    Diverged { residual: f64 },
    #[error("tori are distinct: mismatch {mismatch:e} after phase lock")]
    DistinctTori { mismatch: f64 },
    #[error("tori carry different frequencies {0:?} and {1:?}")]
    FrequencyMismatch(Vec<f64>, Vec<f64>),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("external system: {0}")]
    External(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for WhiskerError {
    fn from(e: std::io::Error) -> Self {
        WhiskerError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, WhiskerError>;
