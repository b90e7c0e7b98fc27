use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("at least 4 samples are required, got {0}")]
    InsufficientSamples(usize),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("invalid ε-grid: {0}")]
    InvalidGrid(String),
    #[error("derivative of order {requested} requested, representative supplies {available}")]
    DerivativeUnavailable { requested: usize, available: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("moment system is singular")]
    MomentSystemSingular,
    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),
    #[error("unsupported distribution: {0}")]
    UnsupportedDistribution(String),
    #[error("partition of unity does not match the atlas: {0}")]
    PartitionMismatch(String),
    #[error("generalized points are not comparable: {0}")]
    NotComparable(String),
    #[error("chart family is not coherent: {0}")]
    CoherenceFailure(String),
    #[error("operands live on different atlases")]
    AtlasMismatch,
    #[error("invalid contraction slots: {0}")]
    InvalidSlots(String),
    #[error("form degree {0} exceeds manifold dimension {1}")]
    DegreeOverflow(usize, usize),
    #[error("invalid form degree: {0}")]
    InvalidDegree(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("step size underflow at t = {t}: {detail}")]
    StiffnessFailure { t: f64, detail: String },
    #[error("trajectory has no impact inside the time span")]
    NoImpact,
    #[error("operator is not a derivation: {0}")]
    NotADerivation(String),
    #[error("unknown registry entry: {0}")]
    UnknownRegistryEntry(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
