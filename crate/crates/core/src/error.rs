use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LabError {
    #[error("singular-stencil: numeric stencil at {0} reaches the singular locus")]
    SingularStencil(String),
    #[error("arity-mismatch: expected {expected} frame vectors, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("metric-degenerate: {0}")]
    MetricDegenerate(String),
    #[error("frame-not-tangent: |dphi(v)| = {0:e}")]
    FrameNotTangent(f64),
    #[error("non-integrable: {0}")]
    NonIntegrable(String),
    #[error("unsupported-kind: {0}")]
    UnsupportedKind(String),
    #[error("not-invertible-on-region: {0}")]
    NotInvertibleOnRegion(String),
    #[error("zero-lambda")]
    ZeroLambda,
    #[error("newton-diverged at {0}")]
    NewtonDiverged(String),
    #[error("nonfinite-sample at {0}")]
    NonfiniteSample(String),
    #[error("frame-construction-failed: {0}")]
    FrameConstructionFailed(String),
    #[error("tail-divergent: fitted tail exponent {0}")]
    TailDivergent(f64),
    #[error("insufficient-samples: need {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
