use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty weight list")]
    EmptySpace,
    #[error("weight {weight} at atom {index} is not positive")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("weights sum to {sum}, expected 1")]
    NotNormalized { sum: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("index map is not a bijection of the atoms")]
    NotBijective,
    #[error("permutation does not preserve the atom weights")]
    NotMeasurePreserving,
    #[error("objects live over different probability spaces")]
    SpaceMismatch,
    #[error("objects live over different manifolds")]
    ManifoldMismatch,
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("negative density value {value} at atom {index}")]
    NegativeDensity { index: usize, value: f64 },
    #[error("invalid manifold spec: {0}")]
    InvalidSpec(String),
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("geodesic between antipodal points is not unique")]
    NonUniqueGeodesic,
    #[error("comparison angle undefined: a side issues from the vertex with zero length")]
    DegenerateVertex,
    #[error("isometry variant does not match: {0}")]
    VariantMismatch(String),
    #[error("operation not supported on this manifold: {0}")]
    UnsupportedVariant(String),
    #[error("geodesic endpoints coincide")]
    IdenticalEndpoints,
    #[error("parameter {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("geodesics do not share a basepoint")]
    MismatchedBasepoint,
    #[error("arity mismatch: expected {expected} items, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("subset must be nonempty and proper")]
    EmptyOrFullSubset,
    #[error("manifold is not a product: {0}")]
    NotAProduct(String),
    #[error("oracle is not a rigid isometry: {0}")]
    NonRigid(String),
    #[error("{count} subsets pass the localization test; add probes")]
    AmbiguousWitness { count: usize },
    #[error("need at least {needed} probe pairs, got {got}")]
    InsufficientProbes { needed: usize, got: usize },
    #[error("probe points coincide")]
    DegenerateProbe,
    #[error("factor constants inconsistent: mixed identity residual {residual}")]
    InconsistentConstants { residual: f64 },
    #[error("{value} is not divisible by {divisor}")]
    DivisibilityError { value: usize, divisor: usize },
    #[error("not a uniform grid function")]
    NotAGrid,
    #[error("parallel mode requires a reentrant oracle")]
    NotReentrant,
    #[error("exhaustive search over {n} atoms exceeds the limit of {limit}")]
    TooLarge { n: usize, limit: usize },
    #[error("linear algebra failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
