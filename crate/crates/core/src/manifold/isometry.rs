use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Point;
use crate::error::{Error, Result};
use crate::tol;

/// Standard deviation of the boost rapidity vector of random Lorentz elements.
const BOOST_SPREAD: f64 = 0.5;

/// An element of `Isom(M)` for one of the supported backends.
///
/// Serialized with row-major matrices, e.g. `{"orthogonal":[[1,0,0],…]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IsometryRepr", into = "IsometryRepr")]
pub enum ManifoldIsometry {
    /// `x ↦ Qx` on the sphere, `QᵀQ = I`.
    Orthogonal(DMatrix<f64>),
    /// `x ↦ Lx` on the hyperboloid, `LᵀJL = J`, `L₀₀ > 0`.
    Lorentz(DMatrix<f64>),
    /// `x ↦ Ax + b` on Euclidean space.
    Rigid { linear: DMatrix<f64>, shift: DVector<f64> },
    /// Factor-wise isometry of a product.
    Product(Vec<ManifoldIsometry>),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum IsometryRepr {
    Orthogonal(Vec<Vec<f64>>),
    Lorentz(Vec<Vec<f64>>),
    Rigid { linear: Vec<Vec<f64>>, shift: Vec<f64> },
    Product(Vec<IsometryRepr>),
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn square_from_rows(rows: Vec<Vec<f64>>) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::VariantMismatch("matrix must be square and nonempty".into()));
    }
    Ok(DMatrix::from_row_iterator(n, n, rows.into_iter().flatten()))
}

impl TryFrom<IsometryRepr> for ManifoldIsometry {
    type Error = Error;
    fn try_from(r: IsometryRepr) -> Result<Self> {
        Ok(match r {
            IsometryRepr::Orthogonal(m) => ManifoldIsometry::Orthogonal(square_from_rows(m)?),
            IsometryRepr::Lorentz(m) => ManifoldIsometry::Lorentz(square_from_rows(m)?),
            IsometryRepr::Rigid { linear, shift } => {
                let linear = square_from_rows(linear)?;
                if shift.len() != linear.nrows() {
                    return Err(Error::VariantMismatch("shift length".into()));
                }
                ManifoldIsometry::Rigid {
                    linear,
                    shift: DVector::from_vec(shift),
                }
            }
            IsometryRepr::Product(parts) => ManifoldIsometry::Product(
                parts
                    .into_iter()
                    .map(ManifoldIsometry::try_from)
                    .collect::<Result<_>>()?,
            ),
        })
    }
}

impl From<ManifoldIsometry> for IsometryRepr {
    fn from(g: ManifoldIsometry) -> Self {
        match g {
            ManifoldIsometry::Orthogonal(m) => IsometryRepr::Orthogonal(rows_of(&m)),
            ManifoldIsometry::Lorentz(m) => IsometryRepr::Lorentz(rows_of(&m)),
            ManifoldIsometry::Rigid { linear, shift } => IsometryRepr::Rigid {
                linear: rows_of(&linear),
                shift: shift.iter().copied().collect(),
            },
            ManifoldIsometry::Product(parts) => {
                IsometryRepr::Product(parts.into_iter().map(IsometryRepr::from).collect())
            }
        }
    }
}

fn minkowski(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::identity(n, n);
    j[(0, 0)] = -1.0;
    j
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

impl ManifoldIsometry {
    pub fn variant_name(&self) -> &'static str {
        match self {
            ManifoldIsometry::Orthogonal(_) => "orthogonal",
            ManifoldIsometry::Lorentz(_) => "lorentz",
            ManifoldIsometry::Rigid { .. } => "rigid",
            ManifoldIsometry::Product(_) => "product",
        }
    }

    /// Number of ambient coordinates acted on.
    pub fn ambient_dim(&self) -> usize {
        match self {
            ManifoldIsometry::Orthogonal(m) | ManifoldIsometry::Lorentz(m) => m.nrows(),
            ManifoldIsometry::Rigid { linear, .. } => linear.nrows(),
            ManifoldIsometry::Product(parts) => parts.iter().map(ManifoldIsometry::ambient_dim).sum(),
        }
    }

    /// Checks `QᵀQ = I` or `LᵀJL = J` (with `L₀₀ > 0`) within tolerance.
    pub fn check_group_identity(&self) -> Result<()> {
        match self {
            ManifoldIsometry::Orthogonal(q) | ManifoldIsometry::Rigid { linear: q, .. } => {
                let n = q.nrows();
                let err = max_abs(&(q.transpose() * q - DMatrix::identity(n, n)));
                if err > tol::MATRIX_IDENTITY {
                    return Err(Error::VariantMismatch(format!("QᵀQ deviates from I by {err:e}")));
                }
            }
            ManifoldIsometry::Lorentz(l) => {
                let j = minkowski(l.nrows());
                let scale = max_abs(l).powi(2).max(1.0);
                let err = max_abs(&(l.transpose() * &j * l - &j));
                if err > tol::MATRIX_IDENTITY * scale || l[(0, 0)] <= 0.0 {
                    return Err(Error::VariantMismatch(format!(
                        "LᵀJL deviates from J by {err:e} (L00 = {})",
                        l[(0, 0)]
                    )));
                }
            }
            ManifoldIsometry::Product(parts) => {
                parts.iter().try_for_each(ManifoldIsometry::check_group_identity)?
            }
        }
        Ok(())
    }

    /// Applies the element to ambient coordinates (only lengths are checked).
    pub fn apply(&self, p: &Point) -> Result<Point> {
        if p.len() != self.ambient_dim() {
            return Err(Error::VariantMismatch(format!(
                "{} acts on {} coordinates, point has {}",
                self.variant_name(),
                self.ambient_dim(),
                p.len()
            )));
        }
        Ok(Point::new(self.apply_slice(p.coords())))
    }

    fn apply_slice(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ManifoldIsometry::Orthogonal(m) | ManifoldIsometry::Lorentz(m) => {
                (m * DVector::from_column_slice(x)).iter().copied().collect()
            }
            ManifoldIsometry::Rigid { linear, shift } => {
                (linear * DVector::from_column_slice(x) + shift).iter().copied().collect()
            }
            ManifoldIsometry::Product(parts) => {
                let mut out = Vec::with_capacity(x.len());
                let mut start = 0;
                for g in parts {
                    let end = start + g.ambient_dim();
                    out.extend(g.apply_slice(&x[start..end]));
                    start = end;
                }
                out
            }
        }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &ManifoldIsometry) -> Result<ManifoldIsometry> {
        let mismatch = || {
            Error::VariantMismatch(format!(
                "cannot compose {} with {}",
                self.variant_name(),
                other.variant_name()
            ))
        };
        match (self, other) {
            (ManifoldIsometry::Orthogonal(a), ManifoldIsometry::Orthogonal(b)) if a.nrows() == b.nrows() => {
                Ok(ManifoldIsometry::Orthogonal(a * b))
            }
            (ManifoldIsometry::Lorentz(a), ManifoldIsometry::Lorentz(b)) if a.nrows() == b.nrows() => {
                Ok(ManifoldIsometry::Lorentz(a * b))
            }
            (
                ManifoldIsometry::Rigid { linear: a, shift: s },
                ManifoldIsometry::Rigid { linear: b, shift: t },
            ) if a.nrows() == b.nrows() => Ok(ManifoldIsometry::Rigid {
                linear: a * b,
                shift: a * t + s,
            }),
            (ManifoldIsometry::Product(gs), ManifoldIsometry::Product(hs)) if gs.len() == hs.len() => {
                Ok(ManifoldIsometry::Product(
                    gs.iter().zip(hs).map(|(g, h)| g.compose(h)).collect::<Result<_>>()?,
                ))
            }
            _ => Err(mismatch()),
        }
    }

    /// Closed-form inverse: `Qᵀ`, `J Lᵀ J`, `(Aᵀ, -Aᵀb)`.
    pub fn inverse(&self) -> ManifoldIsometry {
        match self {
            ManifoldIsometry::Orthogonal(q) => ManifoldIsometry::Orthogonal(q.transpose()),
            ManifoldIsometry::Lorentz(l) => {
                let j = minkowski(l.nrows());
                ManifoldIsometry::Lorentz(&j * l.transpose() * &j)
            }
            ManifoldIsometry::Rigid { linear, shift } => {
                let at = linear.transpose();
                let shift = -(&at * shift);
                ManifoldIsometry::Rigid { linear: at, shift }
            }
            ManifoldIsometry::Product(parts) => {
                ManifoldIsometry::Product(parts.iter().map(ManifoldIsometry::inverse).collect())
            }
        }
    }

    pub fn is_identity(&self, tolerance: f64) -> bool {
        match self {
            ManifoldIsometry::Orthogonal(m) | ManifoldIsometry::Lorentz(m) => {
                max_abs(&(m - DMatrix::identity(m.nrows(), m.nrows()))) <= tolerance
            }
            ManifoldIsometry::Rigid { linear, shift } => {
                max_abs(&(linear - DMatrix::identity(linear.nrows(), linear.nrows()))) <= tolerance
                    && shift.iter().all(|x| x.abs() <= tolerance)
            }
            ManifoldIsometry::Product(parts) => parts.iter().all(|g| g.is_identity(tolerance)),
        }
    }

    /// Largest entry-wise difference of the defining data.
    pub fn max_abs_diff(&self, other: &ManifoldIsometry) -> Result<f64> {
        match (self, other) {
            (ManifoldIsometry::Orthogonal(a), ManifoldIsometry::Orthogonal(b))
            | (ManifoldIsometry::Lorentz(a), ManifoldIsometry::Lorentz(b))
                if a.shape() == b.shape() =>
            {
                Ok(max_abs(&(a - b)))
            }
            (
                ManifoldIsometry::Rigid { linear: a, shift: s },
                ManifoldIsometry::Rigid { linear: b, shift: t },
            ) if a.shape() == b.shape() => {
                Ok(max_abs(&(a - b)).max((s - t).iter().fold(0.0, |m, x| m.max(x.abs()))))
            }
            (ManifoldIsometry::Product(gs), ManifoldIsometry::Product(hs)) if gs.len() == hs.len() => gs
                .iter()
                .zip(hs)
                .try_fold(0.0f64, |m, (g, h)| Ok(m.max(g.max_abs_diff(h)?))),
            _ => Err(Error::VariantMismatch(format!(
                "cannot compare {} with {}",
                self.variant_name(),
                other.variant_name()
            ))),
        }
    }
}

/// The dilation `x ↦ λx` of a flat target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dilation {
    factor: f64,
    dim: usize,
}

impl Dilation {
    pub(crate) fn new(factor: f64, dim: usize) -> Self {
        Dilation { factor, dim }
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn apply(&self, p: &Point) -> Point {
        debug_assert_eq!(p.len(), self.dim);
        Point::new(p.coords().iter().map(|x| self.factor * x).collect())
    }

    /// Preimage of `q`, witnessing surjectivity.
    pub fn preimage(&self, q: &Point) -> Point {
        Point::new(q.coords().iter().map(|x| x / self.factor).collect())
    }
}

pub(crate) fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// A boost composed with a spatial orthogonal map.
pub(crate) fn random_lorentz<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let mut rot = DMatrix::identity(d + 1, d + 1);
    rot.view_mut((1, 1), (d, d)).copy_from(&random_orthogonal(d, rng));
    let w: Vec<f64> = (0..d).map(|_| BOOST_SPREAD * rng.sample::<f64, _>(StandardNormal)).collect();
    let rapidity = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut boost = DMatrix::identity(d + 1, d + 1);
    if rapidity > 0.0 {
        let u: Vec<f64> = w.iter().map(|x| x / rapidity).collect();
        let (ch, sh) = (rapidity.cosh(), rapidity.sinh());
        boost[(0, 0)] = ch;
        for i in 0..d {
            boost[(0, i + 1)] = sh * u[i];
            boost[(i + 1, 0)] = sh * u[i];
            for j in 0..d {
                boost[(i + 1, j + 1)] += (ch - 1.0) * u[i] * u[j];
            }
        }
    }
    boost * rot
}

fn columns(points: impl Iterator<Item = Vec<f64>>, rows: usize) -> DMatrix<f64> {
    let cols: Vec<Vec<f64>> = points.collect();
    DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// Newton iteration `G ← ½(G + J G⁻ᵀ J)`; converges to the nearest element of
/// the orthogonal (J = I) or Lorentz group for inputs already close to it.
fn project_to_group(mut g: DMatrix<f64>, lorentz: bool) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    let j = if lorentz { minkowski(n) } else { DMatrix::identity(n, n) };
    for _ in 0..60 {
        let inv_t = g
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular matrix during projection".into()))?
            .transpose();
        let next = (&g + &j * inv_t * &j) * 0.5;
        let change = max_abs(&(&next - &g));
        g = next;
        if change <= 1e-15 * max_abs(&g).max(1.0) {
            break;
        }
    }
    Ok(g)
}

fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    // Solve G X = Y, i.e. Xᵀ Gᵀ = Yᵀ.
    let svd = x.transpose().svd(true, true);
    let smallest = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let largest = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if !(smallest > 1e-10 * largest) {
        return Err(Error::Numerical("fit samples do not span the ambient space".into()));
    }
    let gt = svd
        .solve(&y.transpose(), 0.0)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(gt.transpose())
}

pub(crate) fn fit_linear(samples: &[(Point, Point)], n: usize, lorentz: bool) -> Result<DMatrix<f64>> {
    if samples.len() < n {
        return Err(Error::Numerical(format!("need at least {n} samples, got {}", samples.len())));
    }
    let x = columns(samples.iter().map(|(a, _)| a.coords().to_vec()), n);
    let y = columns(samples.iter().map(|(_, b)| b.coords().to_vec()), n);
    project_to_group(least_squares(&x, &y)?, lorentz)
}

pub(crate) fn fit_affine(samples: &[(Point, Point)], n: usize) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if samples.len() < n + 1 {
        return Err(Error::Numerical(format!("need at least {} samples, got {}", n + 1, samples.len())));
    }
    let x = columns(
        samples.iter().map(|(a, _)| {
            let mut v = a.coords().to_vec();
            v.push(1.0);
            v
        }),
        n + 1,
    );
    let y = columns(samples.iter().map(|(_, b)| b.coords().to_vec()), n);
    let full = least_squares(&x, &y)?;
    let linear = project_to_group(full.columns(0, n).into_owned(), false)?;
    let k = samples.len() as f64;
    let mut shift = DVector::zeros(n);
    for (a, b) in samples {
        shift += b.to_vector() - &linear * a.to_vector();
    }
    Ok((linear, shift / k))
}

#[cfg(test)]
mod tests {
    use super::super::ManifoldSpec;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn rot_z(theta: f64) -> ManifoldIsometry {
        let (c, s) = (theta.cos(), theta.sin());
        ManifoldIsometry::Orthogonal(DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]))
    }

    #[test]
    fn apply_examples() {
        let s2 = ManifoldSpec::sphere(2);
        let x = Point::new(vec![1.0, 0.0, 0.0]);
        assert_eq!(s2.apply_isometry(&s2.identity_isometry(), &x).unwrap(), x);
        let y = s2.apply_isometry(&rot_z(FRAC_PI_2), &x).unwrap();
        assert!((y.coords()[0]).abs() < 1e-15 && (y.coords()[1] - 1.0).abs() < 1e-15);
        let e2 = ManifoldSpec::euclidean(2);
        let shift = ManifoldIsometry::Rigid {
            linear: DMatrix::identity(2, 2),
            shift: DVector::from_vec(vec![1.0, 1.0]),
        };
        assert_eq!(e2.apply_isometry(&shift, &Point::new(vec![0.0, 0.0])).unwrap(), Point::new(vec![1.0, 1.0]));
        assert!(matches!(
            e2.apply_isometry(&rot_z(1.0), &Point::new(vec![0.0, 0.0])),
            Err(Error::VariantMismatch(_))
        ));
        assert!(matches!(rot_z(1.0).compose(&shift), Err(Error::VariantMismatch(_))));
    }

    #[test]
    fn compose_and_invert() {
        let g = rot_z(0.3).compose(&rot_z(0.9)).unwrap();
        assert!(g.max_abs_diff(&rot_z(1.2)).unwrap() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in [
            ManifoldSpec::sphere(2),
            ManifoldSpec::hyperbolic(2),
            ManifoldSpec::euclidean(3),
            ManifoldSpec::product(vec![ManifoldSpec::sphere(2), ManifoldSpec::euclidean(2)]),
        ] {
            let (g, h) = (m.sample_isometry(&mut rng), m.sample_isometry(&mut rng));
            assert!(g.compose(&g.inverse()).unwrap().is_identity(1e-10));
            let gh = g.compose(&h).unwrap();
            m.check_isometry(&gh).unwrap();
            for _ in 0..10 {
                let x = m.sample_point(&mut rng);
                let lhs = m.apply_isometry(&gh, &x).unwrap();
                let rhs = m.apply_isometry(&g, &m.apply_isometry(&h, &x).unwrap()).unwrap();
                assert!(m.dist(&lhs, &rhs).unwrap() < 1e-10);
                let back = m.apply_isometry(&g.inverse(), &m.apply_isometry(&g, &x).unwrap()).unwrap();
                assert!(m.dist(&back, &x).unwrap() < 1e-10);
            }
        }
    }

    #[test]
    fn lorentz_products_preserve_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h2 = ManifoldSpec::hyperbolic(2);
        for _ in 0..50 {
            let (g, h) = (h2.sample_isometry(&mut rng), h2.sample_isometry(&mut rng));
            let gh = g.compose(&h).unwrap();
            let ManifoldIsometry::Lorentz(l) = &gh else { panic!() };
            let j = minkowski(3);
            assert!(max_abs(&(l.transpose() * &j * l - &j)) < 1e-10);
            assert!(l[(0, 0)] > 0.0);
        }
    }

    #[test]
    fn fit_recovers_elements() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [
            ManifoldSpec::sphere(2),
            ManifoldSpec::hyperbolic(2),
            ManifoldSpec::euclidean(3),
            ManifoldSpec::product(vec![ManifoldSpec::sphere(2), ManifoldSpec::hyperbolic(2)]),
        ] {
            let g = m.sample_isometry(&mut rng);
            let samples: Vec<(Point, Point)> = (0..m.ambient_dim() + 3)
                .map(|_| {
                    let x = m.sample_point(&mut rng);
                    let y = m.apply_isometry(&g, &x).unwrap();
                    (x, y)
                })
                .collect();
            let fit = m.fit_isometry(&samples).unwrap();
            m.check_isometry(&fit).unwrap();
            assert!(fit.max_abs_diff(&g).unwrap() < 1e-10, "{m:?}");
        }
    }

    #[test]
    fn serde_round_trip() {
        let g = ManifoldIsometry::Product(vec![
            rot_z(0.5),
            ManifoldIsometry::Rigid {
                linear: DMatrix::identity(2, 2),
                shift: DVector::from_vec(vec![1.0, 2.0]),
            },
        ]);
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.starts_with(r#"{"product":[{"orthogonal":[["#));
        let back: ManifoldIsometry = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<ManifoldIsometry>(r#"{"orthogonal":[[1,0],[0]]}"#).is_err());
    }
}
