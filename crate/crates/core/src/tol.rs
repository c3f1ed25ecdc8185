//! Numerical tolerances shared by the library, the CLI and the test suites.

/// Allowed deviation of the total mass from 1.
pub const NORMALIZATION: f64 = 1e-12;
/// Two atom weights are considered equal below this gap.
pub const WEIGHT_MATCH: f64 = 1e-10;
/// Chart invariants of points (unit norm, Lorentz norm -1).
pub const CHART: f64 = 1e-10;
/// Defining matrix identities of isometry elements.
pub const MATRIX_IDENTITY: f64 = 1e-10;
/// Metric axioms on random triples.
pub const METRIC_AXIOM: f64 = 1e-9;
/// Constant speed law of geodesics.
pub const SPEED_LAW: f64 = 1e-8;
/// Normalization of the speed density.
pub const ALPHA_NORMALIZATION: f64 = 1e-10;
/// Agreement of numeric and closed-form angles.
pub const ANGLE_AGREEMENT: f64 = 1e-3;
/// Floating-point floor under which successive angle differences are treated as noise.
pub const ANGLE_NOISE_FLOOR: f64 = 1e-12;
/// Behavioural agreement of group operations.
pub const GROUP_ACTION: f64 = 1e-9;
/// Residuals of the rigidity decomposition.
pub const DECOMPOSE_RESIDUAL: f64 = 1e-8;
/// Atoms whose probe outputs moved by more than this (relative to the probe
/// distance) belong to the difference set.
pub const PROBE_DIFFERENCE: f64 = 1e-7;
/// Isometry validation of oracles.
pub const ISOMETRY_VALIDATION: f64 = 1e-9;
/// Mass match for localization witnesses.
pub const LOCALIZATION_MASS: f64 = 1e-10;
/// Value match for localization witnesses.
pub const LOCALIZATION_VALUE: f64 = 1e-8;
/// Exact inversion of density-built oracles.
pub const ETA_RECOVERY: f64 = 1e-10;
/// Probe independence of recovered densities.
pub const ETA_PROBE_INDEPENDENCE: f64 = 1e-9;
/// Residual of the distance identity for affine oracles.
pub const AFFINE_IDENTITY: f64 = 1e-8;
/// Deviations above this mark an oracle as not affine.
pub const NOT_AFFINE: f64 = 1e-6;
/// Slack on the Lipschitz bound of recovered densities.
pub const LIPSCHITZ_SLACK: f64 = 1e-6;
/// Agreement of recovered factor constants.
pub const FACTOR_CONSTANTS: f64 = 1e-9;
/// Mixed Pythagorean identity on product targets.
pub const MIXED_IDENTITY: f64 = 1e-8;
/// Mixed identity failures above this raise `InconsistentConstants`.
pub const MIXED_IDENTITY_FAILURE: f64 = 1e-6;
/// Distance preservation of the interleaving map.
pub const INTERLEAVE: f64 = 1e-12;
/// Number of seeded random pairs used for Lipschitz estimates.
pub const LIPSCHITZ_PAIRS: usize = 500;
/// Additivity of the probed set function `μ̃`.
pub const ADDITIVITY: f64 = 1e-10;
/// Distance preservation of the gallery's explicit isometries.
pub const GALLERY_ISOMETRY: f64 = 1e-10;
/// Relative distance scaling of Euclidean dilations.
pub const DILATION: f64 = 1e-12;
/// Factor by which the non-affine control must clear [`NOT_AFFINE`].
pub const CONTROL_MARGIN: f64 = 1e3;
