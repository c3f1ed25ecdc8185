//! Riemannian backends: round spheres, hyperbolic spaces in the hyperboloid
//! model, Euclidean spaces, Riemannian products and constant rescalings.
//!
//! Points are stored in ambient coordinates: unit vectors of `ℝ^{d+1}` for
//! `Sphere(d)`, vectors with Lorentz norm `-1` and `x₀ > 0` for
//! `Hyperbolic(d)`, plain vectors for `Euclidean(d)`. Product points are the
//! concatenation of the factor coordinates; a rescaled manifold uses the
//! coordinates of the manifold it rescales.

mod isometry;

pub use isometry::{Dilation, ManifoldIsometry};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol;

/// Standard deviation of the tangent vector used to sample hyperbolic points
/// around the base point `(1, 0, …, 0)`.
const HYPERBOLIC_SAMPLE_SPREAD: f64 = 0.6;

/// A Riemannian manifold from the supported catalog.
///
/// Serialized in externally tagged form, e.g. `{"sphere":{"dim":2}}`,
/// `{"product":[…]}`, `{"scaled":{"c":1.5,"of":…}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldSpec {
    Sphere { dim: usize },
    Hyperbolic { dim: usize },
    Euclidean { dim: usize },
    Product(Vec<ManifoldSpec>),
    Scaled { c: f64, of: Box<ManifoldSpec> },
}

/// A point in ambient coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn to_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// ⟨x, y⟩ = -x₀y₀ + Σ xᵢyᵢ
pub fn lorentz_dot(a: &[f64], b: &[f64]) -> f64 {
    -a[0] * b[0] + dot(&a[1..], &b[1..])
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn clamped_acos(c: f64) -> f64 {
    c.clamp(-1.0, 1.0).acos()
}

/// Euclidean comparison angle opposite `c` in a triangle with sides `a`, `b`, `c`.
pub fn comparison_angle_from_sides(a: f64, b: f64, c: f64) -> Result<f64> {
    if a <= 0.0 || b <= 0.0 {
        return Err(Error::DegenerateVertex);
    }
    Ok(clamped_acos((a * a + b * b - c * c) / (2.0 * a * b)))
}

impl ManifoldSpec {
    pub fn sphere(dim: usize) -> Self {
        ManifoldSpec::Sphere { dim }
    }

    pub fn hyperbolic(dim: usize) -> Self {
        ManifoldSpec::Hyperbolic { dim }
    }

    pub fn euclidean(dim: usize) -> Self {
        ManifoldSpec::Euclidean { dim }
    }

    pub fn product(factors: Vec<ManifoldSpec>) -> Self {
        ManifoldSpec::Product(factors)
    }

    pub fn scaled(c: f64, of: ManifoldSpec) -> Self {
        ManifoldSpec::Scaled { c, of: Box::new(of) }
    }

    /// Checks the structural invariants of the spec itself.
    pub fn validate(&self) -> Result<()> {
        match self {
            ManifoldSpec::Sphere { dim } | ManifoldSpec::Hyperbolic { dim } if *dim == 0 => {
                Err(Error::InvalidSpec("sphere/hyperbolic dimension must be positive".into()))
            }
            ManifoldSpec::Euclidean { dim } if *dim == 0 => {
                Err(Error::InvalidSpec("euclidean dimension must be positive".into()))
            }
            ManifoldSpec::Product(factors) => {
                if factors.is_empty() {
                    return Err(Error::InvalidSpec("empty product".into()));
                }
                factors.iter().try_for_each(ManifoldSpec::validate)
            }
            ManifoldSpec::Scaled { c, of } => {
                if !(*c > 0.0) || !c.is_finite() {
                    return Err(Error::InvalidSpec(format!("scale factor {c} must be positive")));
                }
                of.validate()
            }
            _ => Ok(()),
        }
    }

    /// Whether the rigidity theorem applies: irreducible universal cover and
    /// dimension at least two. Euclidean spaces and products are the
    /// non-rigid foils.
    pub fn is_rigid_target(&self) -> bool {
        match self {
            ManifoldSpec::Sphere { dim } | ManifoldSpec::Hyperbolic { dim } => *dim >= 2,
            ManifoldSpec::Scaled { of, .. } => of.is_rigid_target(),
            ManifoldSpec::Euclidean { .. } => false,
            ManifoldSpec::Product(factors) => factors.len() == 1 && factors[0].is_rigid_target(),
        }
    }

    /// Flat targets: Euclidean spaces, their rescalings and products.
    pub fn is_euclidean(&self) -> bool {
        match self {
            ManifoldSpec::Euclidean { .. } => true,
            ManifoldSpec::Scaled { of, .. } => of.is_euclidean(),
            ManifoldSpec::Product(fs) => fs.iter().all(ManifoldSpec::is_euclidean),
            _ => false,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ManifoldSpec::Sphere { dim }
            | ManifoldSpec::Hyperbolic { dim }
            | ManifoldSpec::Euclidean { dim } => *dim,
            ManifoldSpec::Product(fs) => fs.iter().map(ManifoldSpec::dim).sum(),
            ManifoldSpec::Scaled { of, .. } => of.dim(),
        }
    }

    /// Length of the coordinate vector of a point.
    pub fn ambient_dim(&self) -> usize {
        match self {
            ManifoldSpec::Sphere { dim } | ManifoldSpec::Hyperbolic { dim } => dim + 1,
            ManifoldSpec::Euclidean { dim } => *dim,
            ManifoldSpec::Product(fs) => fs.iter().map(ManifoldSpec::ambient_dim).sum(),
            ManifoldSpec::Scaled { of, .. } => of.ambient_dim(),
        }
    }

    /// Factors of a product (a non-product is its own single factor).
    pub fn factors(&self) -> Vec<&ManifoldSpec> {
        match self {
            ManifoldSpec::Product(fs) => fs.iter().collect(),
            other => vec![other],
        }
    }

    /// Coordinate ranges of the product factors.
    pub fn factor_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.factors()
            .into_iter()
            .map(|f| {
                let r = start..start + f.ambient_dim();
                start = r.end;
                r
            })
            .collect()
    }

    /// Splits a product point into its factor points.
    pub fn split_point(&self, p: &Point) -> Result<Vec<Point>> {
        match self {
            ManifoldSpec::Product(_) => {
                self.check_len(p)?;
                Ok(self
                    .factor_ranges()
                    .into_iter()
                    .map(|r| Point(p.0[r].to_vec()))
                    .collect())
            }
            _ => Err(Error::NotAProduct(format!("{self:?}"))),
        }
    }

    /// Concatenates factor points into a product point.
    pub fn join_point(&self, parts: &[Point]) -> Result<Point> {
        match self {
            ManifoldSpec::Product(fs) => {
                if fs.len() != parts.len() {
                    return Err(Error::ArityMismatch {
                        expected: fs.len(),
                        got: parts.len(),
                    });
                }
                let coords: Vec<f64> = parts.iter().flat_map(|p| p.0.iter().copied()).collect();
                let p = Point(coords);
                self.check_point(&p)?;
                Ok(p)
            }
            _ => Err(Error::NotAProduct(format!("{self:?}"))),
        }
    }

    fn check_len(&self, p: &Point) -> Result<()> {
        if p.len() != self.ambient_dim() {
            return Err(Error::InvalidPoint(format!(
                "expected {} coordinates, got {}",
                self.ambient_dim(),
                p.len()
            )));
        }
        Ok(())
    }

    /// Verifies the chart invariant of a point.
    pub fn check_point(&self, p: &Point) -> Result<()> {
        self.check_len(p)?;
        if p.0.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        match self {
            ManifoldSpec::Sphere { .. } => {
                let n = norm(&p.0);
                if (n - 1.0).abs() > tol::CHART {
                    return Err(Error::InvalidPoint(format!("sphere point has norm {n}")));
                }
            }
            ManifoldSpec::Hyperbolic { .. } => {
                let q = lorentz_dot(&p.0, &p.0);
                if (q + 1.0).abs() > tol::CHART * p.0[0].powi(2).max(1.0) || p.0[0] <= 0.0 {
                    return Err(Error::InvalidPoint(format!(
                        "hyperboloid point has Lorentz norm {q} and x0 = {}",
                        p.0[0]
                    )));
                }
            }
            ManifoldSpec::Euclidean { .. } => {}
            ManifoldSpec::Product(fs) => {
                for (f, r) in fs.iter().zip(self.factor_ranges()) {
                    f.check_point(&Point(p.0[r].to_vec()))?;
                }
            }
            ManifoldSpec::Scaled { of, .. } => of.check_point(p)?,
        }
        Ok(())
    }

    /// Projects ambient coordinates back onto the chart.
    fn retract(&self, coords: &mut [f64]) {
        match self {
            ManifoldSpec::Sphere { .. } => {
                let n = norm(coords);
                coords.iter_mut().for_each(|x| *x /= n);
            }
            ManifoldSpec::Hyperbolic { .. } => {
                coords[0] = (1.0 + dot(&coords[1..], &coords[1..])).sqrt();
            }
            ManifoldSpec::Euclidean { .. } => {}
            ManifoldSpec::Product(fs) => {
                for (f, r) in fs.iter().zip(self.factor_ranges()) {
                    f.retract(&mut coords[r]);
                }
            }
            ManifoldSpec::Scaled { of, .. } => of.retract(coords),
        }
    }

    /// Riemannian distance.
    pub fn dist(&self, p: &Point, q: &Point) -> Result<f64> {
        self.check_point(p)?;
        self.check_point(q)?;
        Ok(self.dist_unchecked(p.coords(), q.coords()))
    }

    /// Distance on coordinates already known to be valid.
    pub(crate) fn dist_unchecked(&self, p: &[f64], q: &[f64]) -> f64 {
        self.dist_sq_unchecked(p, q).sqrt()
    }

    pub(crate) fn dist_sq_unchecked(&self, p: &[f64], q: &[f64]) -> f64 {
        match self {
            ManifoldSpec::Sphere { .. } => {
                let diff = norm(&sub(p, q));
                let sum: f64 = p.iter().zip(q).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt();
                (2.0 * diff.atan2(sum)).powi(2)
            }
            ManifoldSpec::Hyperbolic { .. } => {
                let d = sub(p, q);
                let chord = lorentz_dot(&d, &d).max(0.0).sqrt();
                (2.0 * (chord / 2.0).asinh()).powi(2)
            }
            ManifoldSpec::Euclidean { .. } => p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(),
            ManifoldSpec::Product(fs) => fs
                .iter()
                .zip(self.factor_ranges())
                .map(|(f, r)| f.dist_sq_unchecked(&p[r.clone()], &q[r]))
                .sum(),
            ManifoldSpec::Scaled { c, of } => c * c * of.dist_sq_unchecked(p, q),
        }
    }

    /// Per-factor distances of a product (a single entry otherwise).
    pub fn factor_distances(&self, p: &Point, q: &Point) -> Result<Vec<f64>> {
        self.check_point(p)?;
        self.check_point(q)?;
        Ok(self
            .factors()
            .into_iter()
            .zip(self.factor_ranges())
            .map(|(f, r)| f.dist_unchecked(&p.0[r.clone()], &q.0[r]))
            .collect())
    }

    /// The point at fraction `t` along the unique minimizing geodesic from `p` to `q`.
    pub fn geodesic_point(&self, p: &Point, q: &Point, t: f64) -> Result<Point> {
        self.check_point(p)?;
        self.check_point(q)?;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfRange(t));
        }
        self.geodesic_unchecked(p.coords(), q.coords(), t).map(Point)
    }

    pub(crate) fn geodesic_unchecked(&self, p: &[f64], q: &[f64], t: f64) -> Result<Vec<f64>> {
        if t == 0.0 {
            return Ok(p.to_vec());
        }
        if t == 1.0 {
            return Ok(q.to_vec());
        }
        let mut out = match self {
            ManifoldSpec::Sphere { .. } => {
                let theta = self.dist_unchecked(p, q);
                if self.is_antipodal(p, q) {
                    return Err(Error::NonUniqueGeodesic);
                }
                if theta < 1e-15 {
                    return Ok(p.to_vec());
                }
                let (a, b) = (((1.0 - t) * theta).sin(), (t * theta).sin());
                let s = theta.sin();
                p.iter().zip(q).map(|(x, y)| (a * x + b * y) / s).collect()
            }
            ManifoldSpec::Hyperbolic { .. } => {
                let d = self.dist_unchecked(p, q);
                if d < 1e-15 {
                    return Ok(p.to_vec());
                }
                let (a, b) = (((1.0 - t) * d).sinh(), (t * d).sinh());
                let s = d.sinh();
                p.iter().zip(q).map(|(x, y)| (a * x + b * y) / s).collect()
            }
            ManifoldSpec::Euclidean { .. } => {
                p.iter().zip(q).map(|(x, y)| x + t * (y - x)).collect()
            }
            ManifoldSpec::Product(fs) => {
                let mut out = Vec::with_capacity(p.len());
                for (f, r) in fs.iter().zip(self.factor_ranges()) {
                    out.extend(f.geodesic_unchecked(&p[r.clone()], &q[r], t)?);
                }
                out
            }
            ManifoldSpec::Scaled { of, .. } => of.geodesic_unchecked(p, q, t)?,
        };
        self.retract(&mut out);
        Ok(out)
    }

    /// The point at distance `r` from `p` on the geodesic through `q`,
    /// extending past `q` when `r > d(p, q)`.
    pub fn point_at_distance(&self, p: &Point, q: &Point, r: f64) -> Result<Point> {
        self.check_point(p)?;
        self.check_point(q)?;
        let d = self.dist_unchecked(p.coords(), q.coords());
        if d == 0.0 {
            return Err(Error::IdenticalEndpoints);
        }
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::OutOfRange(r));
        }
        let out = Point(self.geodesic_unchecked(p.coords(), q.coords(), r / d)?);
        if (self.dist_unchecked(p.coords(), out.coords()) - r).abs() > 1e-9 * r.max(1.0) {
            return Err(Error::InvalidPoint(format!("distance {r} is beyond the injectivity radius")));
        }
        Ok(out)
    }

    fn is_antipodal(&self, p: &[f64], q: &[f64]) -> bool {
        let sum: f64 = p.iter().zip(q).map(|(a, b)| (a + b) * (a + b)).sum::<f64>().sqrt();
        sum <= 1e-10
    }

    /// Initial velocity (ambient coordinates) of the unit-time geodesic from `p` to `q`.
    pub(crate) fn log_unchecked(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        match self {
            ManifoldSpec::Sphere { .. } => {
                if self.is_antipodal(p, q) {
                    return Err(Error::NonUniqueGeodesic);
                }
                let c = dot(p, q);
                let v: Vec<f64> = p.iter().zip(q).map(|(x, y)| y - c * x).collect();
                let n = norm(&v);
                if n == 0.0 {
                    return Ok(vec![0.0; p.len()]);
                }
                let theta = self.dist_unchecked(p, q);
                Ok(v.into_iter().map(|x| x * theta / n).collect())
            }
            ManifoldSpec::Hyperbolic { .. } => {
                let c = lorentz_dot(p, q);
                let v: Vec<f64> = p.iter().zip(q).map(|(x, y)| y + c * x).collect();
                let n = lorentz_dot(&v, &v).max(0.0).sqrt();
                if n == 0.0 {
                    return Ok(vec![0.0; p.len()]);
                }
                let d = self.dist_unchecked(p, q);
                Ok(v.into_iter().map(|x| x * d / n).collect())
            }
            ManifoldSpec::Euclidean { .. } => Ok(sub(q, p)),
            ManifoldSpec::Product(fs) => {
                let mut out = Vec::with_capacity(p.len());
                for (f, r) in fs.iter().zip(self.factor_ranges()) {
                    out.extend(f.log_unchecked(&p[r.clone()], &q[r])?);
                }
                Ok(out)
            }
            ManifoldSpec::Scaled { of, .. } => of.log_unchecked(p, q),
        }
    }

    /// Riemannian inner product of two tangent vectors at `p` (ambient coordinates).
    pub(crate) fn inner_unchecked(&self, u: &[f64], v: &[f64]) -> f64 {
        match self {
            ManifoldSpec::Sphere { .. } | ManifoldSpec::Euclidean { .. } => dot(u, v),
            ManifoldSpec::Hyperbolic { .. } => lorentz_dot(u, v),
            ManifoldSpec::Product(fs) => fs
                .iter()
                .zip(self.factor_ranges())
                .map(|(f, r)| f.inner_unchecked(&u[r.clone()], &v[r]))
                .sum(),
            ManifoldSpec::Scaled { c, of } => c * c * of.inner_unchecked(u, v),
        }
    }

    /// Riemannian angle at `x` between the geodesics towards `y` and `z`.
    pub fn riemannian_angle(&self, x: &Point, y: &Point, z: &Point) -> Result<f64> {
        for p in [x, y, z] {
            self.check_point(p)?;
        }
        self.riemannian_angle_unchecked(x.coords(), y.coords(), z.coords())
    }

    pub(crate) fn riemannian_angle_unchecked(&self, x: &[f64], y: &[f64], z: &[f64]) -> Result<f64> {
        let u = self.log_unchecked(x, y)?;
        let v = self.log_unchecked(x, z)?;
        let (uu, vv) = (self.inner_unchecked(&u, &u), self.inner_unchecked(&v, &v));
        if uu <= 0.0 || vv <= 0.0 {
            return Err(Error::DegenerateVertex);
        }
        Ok(clamped_acos(self.inner_unchecked(&u, &v) / (uu * vv).sqrt()))
    }

    /// Euclidean comparison angle at `x` of the triangle `(x, y, z)`.
    pub fn comparison_angle(&self, x: &Point, y: &Point, z: &Point) -> Result<f64> {
        let a = self.dist(x, y)?;
        let b = self.dist(x, z)?;
        let c = self.dist(y, z)?;
        comparison_angle_from_sides(a, b, c)
    }

    /// Draws a point from a fixed reference distribution of the backend.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let mut coords = Vec::with_capacity(self.ambient_dim());
        self.sample_into(rng, &mut coords);
        Point(coords)
    }

    fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match self {
            ManifoldSpec::Sphere { dim } => {
                let v: Vec<f64> = loop {
                    let v: Vec<f64> = (0..=*dim).map(|_| rng.sample(StandardNormal)).collect();
                    if norm(&v) > 1e-6 {
                        break v;
                    }
                };
                let n = norm(&v);
                out.extend(v.into_iter().map(|x| x / n));
            }
            ManifoldSpec::Hyperbolic { dim } => {
                let v: Vec<f64> = (0..*dim)
                    .map(|_| HYPERBOLIC_SAMPLE_SPREAD * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                out.push((1.0 + dot(&v, &v)).sqrt());
                out.extend(v);
            }
            ManifoldSpec::Euclidean { dim } => {
                out.extend((0..*dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
            }
            ManifoldSpec::Product(fs) => fs.iter().for_each(|f| f.sample_into(rng, out)),
            ManifoldSpec::Scaled { of, .. } => of.sample_into(rng, out),
        }
    }

    /// Deterministic random point for a seed.
    pub fn random_point(&self, seed: u64) -> Point {
        self.sample_point(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// The canonical base point: north pole, hyperboloid vertex or origin.
    pub fn base_point(&self) -> Point {
        let mut coords = vec![0.0; self.ambient_dim()];
        for (f, r) in self.factors().into_iter().zip(self.factor_ranges()) {
            if matches!(
                f.unscaled(),
                ManifoldSpec::Sphere { .. } | ManifoldSpec::Hyperbolic { .. }
            ) {
                coords[r.start] = 1.0;
            }
        }
        Point(coords)
    }

    fn unscaled(&self) -> &ManifoldSpec {
        match self {
            ManifoldSpec::Scaled { of, .. } => of.unscaled(),
            other => other,
        }
    }

    /// The identity isometry of this manifold.
    pub fn identity_isometry(&self) -> ManifoldIsometry {
        match self {
            ManifoldSpec::Sphere { dim } => ManifoldIsometry::Orthogonal(DMatrix::identity(dim + 1, dim + 1)),
            ManifoldSpec::Hyperbolic { dim } => ManifoldIsometry::Lorentz(DMatrix::identity(dim + 1, dim + 1)),
            ManifoldSpec::Euclidean { dim } => ManifoldIsometry::Rigid {
                linear: DMatrix::identity(*dim, *dim),
                shift: DVector::zeros(*dim),
            },
            ManifoldSpec::Product(fs) => {
                ManifoldIsometry::Product(fs.iter().map(ManifoldSpec::identity_isometry).collect())
            }
            ManifoldSpec::Scaled { of, .. } => of.identity_isometry(),
        }
    }

    /// Draws an isometry from a fixed reference distribution.
    pub fn sample_isometry<R: Rng + ?Sized>(&self, rng: &mut R) -> ManifoldIsometry {
        match self {
            ManifoldSpec::Sphere { dim } => ManifoldIsometry::Orthogonal(isometry::random_orthogonal(dim + 1, rng)),
            ManifoldSpec::Hyperbolic { dim } => ManifoldIsometry::Lorentz(isometry::random_lorentz(*dim, rng)),
            ManifoldSpec::Euclidean { dim } => ManifoldIsometry::Rigid {
                linear: isometry::random_orthogonal(*dim, rng),
                shift: DVector::from_fn(*dim, |_, _| rng.sample(StandardNormal)),
            },
            ManifoldSpec::Product(fs) => {
                ManifoldIsometry::Product(fs.iter().map(|f| f.sample_isometry(rng)).collect())
            }
            ManifoldSpec::Scaled { of, .. } => of.sample_isometry(rng),
        }
    }

    /// Deterministic random isometry for a seed.
    pub fn random_isometry(&self, seed: u64) -> ManifoldIsometry {
        self.sample_isometry(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Checks that `g` is an isometry element of this manifold's variant.
    pub fn check_isometry(&self, g: &ManifoldIsometry) -> Result<()> {
        match (self, g) {
            (ManifoldSpec::Scaled { of, .. }, g) => of.check_isometry(g),
            (ManifoldSpec::Sphere { dim }, ManifoldIsometry::Orthogonal(m))
            | (ManifoldSpec::Hyperbolic { dim }, ManifoldIsometry::Lorentz(m))
                if m.nrows() == dim + 1 =>
            {
                g.check_group_identity()
            }
            (ManifoldSpec::Euclidean { dim }, ManifoldIsometry::Rigid { linear, .. })
                if linear.nrows() == *dim =>
            {
                g.check_group_identity()
            }
            (ManifoldSpec::Product(fs), ManifoldIsometry::Product(gs)) if fs.len() == gs.len() => {
                fs.iter().zip(gs).try_for_each(|(f, g)| f.check_isometry(g))
            }
            _ => Err(Error::VariantMismatch(format!(
                "{} does not act on {self:?}",
                g.variant_name()
            ))),
        }
    }

    /// Applies `g` to `p` after checking both against this manifold.
    pub fn apply_isometry(&self, g: &ManifoldIsometry, p: &Point) -> Result<Point> {
        self.check_isometry(g)?;
        self.check_point(p)?;
        let mut out = g.apply(p)?;
        self.retract(&mut out.0);
        Ok(out)
    }

    /// Applies `g` without validating it or the point against this manifold.
    pub(crate) fn apply_isometry_unchecked(&self, g: &ManifoldIsometry, p: &Point) -> Result<Point> {
        let mut out = g.apply(p)?;
        self.retract(&mut out.0);
        Ok(out)
    }

    /// The surjective λ-dilation `x ↦ λx`. Only flat targets admit one.
    pub fn scaling_map(&self, lambda: f64) -> Result<Dilation> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidSpec(format!("dilation factor {lambda} must be positive")));
        }
        if !self.is_euclidean() {
            return Err(Error::UnsupportedVariant(format!(
                "{self:?} admits no surjective dilation with factor ≠ 1"
            )));
        }
        Ok(Dilation::new(lambda, self.ambient_dim()))
    }

    /// Fits an isometry element to sample pairs `y_k ≈ g(x_k)`.
    ///
    /// Sphere and hyperbolic backends solve a least-squares linear system in
    /// ambient coordinates and project to the orthogonal/Lorentz group;
    /// Euclidean backends fit an affine map and project its linear part;
    /// products are fitted factor by factor.
    pub fn fit_isometry(&self, samples: &[(Point, Point)]) -> Result<ManifoldIsometry> {
        for (x, y) in samples {
            self.check_len(x)?;
            self.check_len(y)?;
        }
        match self {
            ManifoldSpec::Sphere { dim } => Ok(ManifoldIsometry::Orthogonal(isometry::fit_linear(
                samples,
                dim + 1,
                false,
            )?)),
            ManifoldSpec::Hyperbolic { dim } => Ok(ManifoldIsometry::Lorentz(isometry::fit_linear(
                samples,
                dim + 1,
                true,
            )?)),
            ManifoldSpec::Euclidean { dim } => {
                let (linear, shift) = isometry::fit_affine(samples, *dim)?;
                Ok(ManifoldIsometry::Rigid { linear, shift })
            }
            ManifoldSpec::Product(fs) => {
                let parts = fs
                    .iter()
                    .zip(self.factor_ranges())
                    .map(|(f, r)| {
                        let sub: Vec<(Point, Point)> = samples
                            .iter()
                            .map(|(x, y)| (Point(x.0[r.clone()].to_vec()), Point(y.0[r.clone()].to_vec())))
                            .collect();
                        f.fit_isometry(&sub)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(ManifoldIsometry::Product(parts))
            }
            ManifoldSpec::Scaled { of, .. } => of.fit_isometry(samples),
        }
    }
}
