//! Metric geometry of `L²(Ω, M)`: square-integrable maps from a finite
//! probability space into a Riemannian manifold, together with the isometry
//! group `L²(Ω, Isom(M)) ⋊ Aut(Ω)`, black-box rigidity decomposition, affine
//! maps characterized by a density, and explicit non-rigid isometries of
//! Euclidean and reducible targets.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod affine;
pub mod battery;
pub mod error;
pub mod gallery;
pub mod isometry_group;
pub mod l2;
pub mod manifold;
pub mod measure;
pub mod report;
pub mod tol;

pub use error::{Error, Result};
pub use manifold::{Dilation, ManifoldIsometry, ManifoldSpec, Point};
pub use measure::{common_refinement, pushforward_density, Automorphism, DensityFn, Partition, ProbSpace};
pub use isometry_group::{IsometryOracle, L2Isometry};
pub use l2::{d_eta, d_l2, geodesic, L2Function, L2Geodesic};
pub use report::{Check, Report, SuiteReport};
