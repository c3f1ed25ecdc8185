//! The space `L²(Ω, M)` over a finite probability space.
//!
//! A function is one manifold point per atom and
//! `d_{L²}(f, g)² = Σ p_i d_M(f_i, g_i)²`. Every geodesic moves each atom
//! along a geodesic of `M` at relative speed `α_i` with `Σ p_i α_i² = 1`;
//! [`L2Geodesic`] stores exactly that data.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{comparison_angle_from_sides, ManifoldSpec, Point};
use crate::measure::{compensated_sum, DensityFn, Partition, ProbSpace};

/// A map from the atoms of a [`ProbSpace`] into a manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "L2FunctionRepr", into = "L2FunctionRepr")]
pub struct L2Function {
    space: Arc<ProbSpace>,
    manifold: Arc<ManifoldSpec>,
    points: Vec<Point>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct L2FunctionRepr {
    space: Arc<ProbSpace>,
    manifold: Arc<ManifoldSpec>,
    points: Vec<Point>,
}

impl TryFrom<L2FunctionRepr> for L2Function {
    type Error = Error;
    fn try_from(r: L2FunctionRepr) -> Result<Self> {
        L2Function::new(r.space, r.manifold, r.points)
    }
}

impl From<L2Function> for L2FunctionRepr {
    fn from(f: L2Function) -> Self {
        L2FunctionRepr {
            space: f.space,
            manifold: f.manifold,
            points: f.points,
        }
    }
}

fn same_arc<T: PartialEq>(a: &Arc<T>, b: &Arc<T>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

impl L2Function {
    pub fn new(space: Arc<ProbSpace>, manifold: Arc<ManifoldSpec>, points: Vec<Point>) -> Result<Self> {
        manifold.validate()?;
        if points.len() != space.len() {
            return Err(Error::LengthMismatch {
                expected: space.len(),
                got: points.len(),
            });
        }
        for p in &points {
            manifold.check_point(p)?;
        }
        Ok(L2Function {
            space,
            manifold,
            points,
        })
    }

    /// Trusted constructor for points produced by backend operations.
    pub(crate) fn from_parts(space: Arc<ProbSpace>, manifold: Arc<ManifoldSpec>, points: Vec<Point>) -> Self {
        debug_assert_eq!(points.len(), space.len());
        L2Function {
            space,
            manifold,
            points,
        }
    }

    /// The constant function `f_x^Ω`.
    pub fn constant(space: Arc<ProbSpace>, manifold: Arc<ManifoldSpec>, x: Point) -> Result<Self> {
        let n = space.len();
        L2Function::new(space, manifold, vec![x; n])
    }

    pub fn random<R: Rng + ?Sized>(space: Arc<ProbSpace>, manifold: Arc<ManifoldSpec>, rng: &mut R) -> Self {
        let points = (0..space.len()).map(|_| manifold.sample_point(rng)).collect();
        L2Function::from_parts(space, manifold, points)
    }

    pub fn space(&self) -> &Arc<ProbSpace> {
        &self.space
    }

    pub fn manifold(&self) -> &Arc<ManifoldSpec> {
        &self.manifold
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Copy with the value at atom `i` replaced.
    pub fn with_point(&self, i: usize, p: Point) -> Result<Self> {
        self.manifold.check_point(&p)?;
        let mut points = self.points.clone();
        points[i] = p;
        Ok(L2Function::from_parts(self.space.clone(), self.manifold.clone(), points))
    }

    pub fn same_domain(&self, other: &L2Function) -> Result<()> {
        if !same_arc(&self.space, &other.space) {
            return Err(Error::SpaceMismatch);
        }
        if !same_arc(&self.manifold, &other.manifold) {
            return Err(Error::ManifoldMismatch);
        }
        Ok(())
    }

    /// Per-atom squared distances `d_M(f_i, g_i)²`.
    pub fn pointwise_dist_sq(&self, other: &L2Function) -> Result<Vec<f64>> {
        self.same_domain(other)?;
        Ok(self
            .points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| self.manifold.dist_sq_unchecked(a.coords(), b.coords()))
            .collect())
    }
}

/// `d_{L²}(f, g) = (Σ p_i d_M(f_i, g_i)²)^{1/2}`.
pub fn d_l2(f: &L2Function, g: &L2Function) -> Result<f64> {
    let d2 = f.pointwise_dist_sq(g)?;
    Ok(compensated_sum(d2.iter().zip(f.space.weights()).map(|(d, p)| p * d)).sqrt())
}

/// The pseudo-metric `d_η(f, g) = (Σ η_i p_i d_M(f_i, g_i)²)^{1/2}`.
pub fn d_eta(eta: &DensityFn, f: &L2Function, g: &L2Function) -> Result<f64> {
    if eta.len() != f.space.len() {
        return Err(Error::SpaceMismatch);
    }
    let d2 = f.pointwise_dist_sq(g)?;
    Ok(compensated_sum(
        d2.iter()
            .zip(f.space.weights())
            .zip(eta.values())
            .map(|((d, p), e)| e * p * d),
    )
    .sqrt())
}

/// A geodesic of `L²(Ω, M)` between two functions, stored as its endpoints
/// and per-atom relative speeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Geodesic {
    start: L2Function,
    end: L2Function,
    alpha: Vec<f64>,
    length: f64,
}

impl L2Geodesic {
    pub fn start(&self) -> &L2Function {
        &self.start
    }

    pub fn end(&self) -> &L2Function {
        &self.end
    }

    /// Relative speed per atom, normalized by `Σ p_i α_i² = 1`.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// `Σ p_i α_i²`
    pub fn alpha_norm_sq(&self) -> f64 {
        compensated_sum(self.alpha.iter().zip(self.start.space.weights()).map(|(a, p)| p * a * a))
    }

    /// The function at fraction `t` of the way, `σ(t)(ω) = σ^ω(α(ω) t)`.
    pub fn eval(&self, t: f64) -> Result<L2Function> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfRange(t));
        }
        let m = &self.start.manifold;
        let points = self
            .start
            .points
            .iter()
            .zip(&self.end.points)
            .map(|(a, b)| m.geodesic_unchecked(a.coords(), b.coords(), t).map(Point::new))
            .collect::<Result<Vec<_>>>()?;
        Ok(L2Function::from_parts(self.start.space.clone(), m.clone(), points))
    }
}

/// The geodesic from `f` to `g`: atom-wise minimizing geodesics with
/// `α_i = d_M(f_i, g_i) / d_{L²}(f, g)`.
pub fn geodesic(f: &L2Function, g: &L2Function) -> Result<L2Geodesic> {
    let d2 = f.pointwise_dist_sq(g)?;
    let length = compensated_sum(d2.iter().zip(f.space.weights()).map(|(d, p)| p * d)).sqrt();
    if length == 0.0 {
        return Err(Error::IdenticalEndpoints);
    }
    if matches!(f.manifold.as_ref(), ManifoldSpec::Sphere { .. }) || contains_sphere(&f.manifold) {
        // refuse antipodal atom pairs up front rather than at evaluation time
        for (a, b) in f.points.iter().zip(&g.points) {
            f.manifold.geodesic_unchecked(a.coords(), b.coords(), 0.5)?;
        }
    }
    let alpha = d2.iter().map(|d| d.sqrt() / length).collect();
    Ok(L2Geodesic {
        start: f.clone(),
        end: g.clone(),
        alpha,
        length,
    })
}

fn contains_sphere(m: &ManifoldSpec) -> bool {
    match m {
        ManifoldSpec::Sphere { .. } => true,
        ManifoldSpec::Product(fs) => fs.iter().any(contains_sphere),
        ManifoldSpec::Scaled { of, .. } => contains_sphere(of),
        _ => false,
    }
}

/// Comparison angles of two geodesics at shrinking scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleTrace {
    pub scales: Vec<f64>,
    pub angles: Vec<f64>,
    /// `|angles[k+1] - angles[k]|`
    pub diffs: Vec<f64>,
    /// Richardson extrapolation of the last two scales, assuming an `O(t²)` error.
    pub extrapolated: f64,
}

impl AngleTrace {
    /// True if the successive differences shrink at every scale `≤ below`,
    /// up to a floating-point noise floor.
    pub fn differences_decreasing_below(&self, below: f64, noise_floor: f64) -> bool {
        let idx: Vec<usize> = (0..self.diffs.len()).filter(|&k| self.scales[k] <= below).collect();
        idx.windows(2)
            .all(|w| self.diffs[w[1]] <= self.diffs[w[0]] + noise_floor)
    }
}

fn check_basepoint(f: &L2Function, s: &L2Geodesic) -> Result<()> {
    f.same_domain(&s.start)?;
    if f.points != s.start.points {
        return Err(Error::MismatchedBasepoint);
    }
    Ok(())
}

/// Comparison angle at `f` between `σ₁(t)` and `σ₂(t)` for each scale `t`.
pub fn alexandrov_angle_numeric(
    f: &L2Function,
    s1: &L2Geodesic,
    s2: &L2Geodesic,
    scales: &[f64],
) -> Result<AngleTrace> {
    check_basepoint(f, s1)?;
    check_basepoint(f, s2)?;
    if scales.is_empty() {
        return Err(Error::InvalidSpec("no scales given".into()));
    }
    if scales.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return Err(Error::OutOfRange(
            *scales.iter().find(|&&t| !(t > 0.0 && t <= 1.0)).unwrap(),
        ));
    }
    if scales.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidSpec("scales must be strictly decreasing".into()));
    }
    let angles = scales
        .iter()
        .map(|&t| {
            let (a, b) = (s1.eval(t)?, s2.eval(t)?);
            comparison_angle_from_sides(d_l2(f, &a)?, d_l2(f, &b)?, d_l2(&a, &b)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let diffs: Vec<f64> = angles.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let k = angles.len();
    let extrapolated = if k >= 2 {
        let ratio = (scales[k - 2] / scales[k - 1]).powi(2);
        angles[k - 1] + (angles[k - 1] - angles[k - 2]) / (ratio - 1.0)
    } else {
        angles[0]
    };
    Ok(AngleTrace {
        scales: scales.to_vec(),
        angles,
        diffs,
        extrapolated,
    })
}

/// Per-atom Riemannian angles between the two geodesics (`None` where an
/// atom does not move along one of them).
pub fn atom_angles(s1: &L2Geodesic, s2: &L2Geodesic) -> Result<Vec<Option<f64>>> {
    s1.start.same_domain(&s2.start)?;
    if s1.start.points != s2.start.points {
        return Err(Error::MismatchedBasepoint);
    }
    let m = &s1.start.manifold;
    (0..s1.alpha.len())
        .map(|i| {
            if s1.alpha[i] == 0.0 || s2.alpha[i] == 0.0 {
                return Ok(None);
            }
            m.riemannian_angle_unchecked(
                s1.start.points[i].coords(),
                s1.end.points[i].coords(),
                s2.end.points[i].coords(),
            )
            .map(Some)
        })
        .collect()
}

/// Closed-form Alexandrov angle `arccos(Σ p_i α1_i α2_i cos θ_i)`.
pub fn alexandrov_angle_analytic(s1: &L2Geodesic, s2: &L2Geodesic) -> Result<f64> {
    let thetas = atom_angles(s1, s2)?;
    let weights = s1.start.space.weights();
    let c = compensated_sum(thetas.iter().enumerate().filter_map(|(i, th)| {
        th.map(|th| weights[i] * s1.alpha[i] * s2.alpha[i] * th.cos())
    }));
    Ok(c.clamp(-1.0, 1.0).acos())
}

/// The simple function `f_x^α`: value `x_b` on block `b`.
pub fn simple_embed(
    space: Arc<ProbSpace>,
    manifold: Arc<ManifoldSpec>,
    partition: &Partition,
    values: &[Point],
) -> Result<L2Function> {
    if partition.atom_count() != space.len() {
        return Err(Error::SpaceMismatch);
    }
    if values.len() != partition.blocks().len() {
        return Err(Error::ArityMismatch {
            expected: partition.blocks().len(),
            got: values.len(),
        });
    }
    let labels = partition.labels();
    let points = labels.iter().map(|&b| values[b].clone()).collect();
    L2Function::new(space, manifold, points)
}

/// A function restricted to a subset of atoms, keeping the ambient weights
/// (so the total mass is `μ(A)`, not 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Restricted {
    indices: Vec<usize>,
    weights: Vec<f64>,
    manifold: Arc<ManifoldSpec>,
    points: Vec<Point>,
}

impl Restricted {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn mass(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    /// `(Σ_{i∈A} p_i d_M(f_i, g_i)²)^{1/2}`
    pub fn dist(&self, other: &Restricted) -> Result<f64> {
        if self.indices != other.indices || self.weights != other.weights {
            return Err(Error::SpaceMismatch);
        }
        if !same_arc(&self.manifold, &other.manifold) {
            return Err(Error::ManifoldMismatch);
        }
        Ok(compensated_sum(
            self.points
                .iter()
                .zip(&other.points)
                .zip(&self.weights)
                .map(|((a, b), p)| p * self.manifold.dist_sq_unchecked(a.coords(), b.coords())),
        )
        .sqrt())
    }

    /// The same values over the renormalized space `(A, μ/μ(A))`.
    pub fn normalized(&self) -> Result<L2Function> {
        let total = self.mass();
        let space = ProbSpace::new(self.weights.iter().map(|w| w / total).collect())?;
        L2Function::new(Arc::new(space), self.manifold.clone(), self.points.clone())
    }
}

/// Splits `f` into its restrictions to `A` and to `Aᶜ`.
pub fn restrict_split(f: &L2Function, set: &[usize]) -> Result<(Restricted, Restricted)> {
    let n = f.len();
    let mut inside = vec![false; n];
    for &i in set {
        if i >= n {
            return Err(Error::LengthMismatch { expected: n, got: i + 1 });
        }
        inside[i] = true;
    }
    let count = inside.iter().filter(|&&b| b).count();
    if count == 0 || count == n {
        return Err(Error::EmptyOrFullSubset);
    }
    let part = |want: bool| {
        let indices: Vec<usize> = (0..n).filter(|&i| inside[i] == want).collect();
        Restricted {
            weights: indices.iter().map(|&i| f.space.weight(i)).collect(),
            points: indices.iter().map(|&i| f.points[i].clone()).collect(),
            manifold: f.manifold.clone(),
            indices,
        }
    };
    Ok((part(true), part(false)))
}

/// Reassembles a function from complementary restrictions.
pub fn glue(space: Arc<ProbSpace>, a: &Restricted, b: &Restricted) -> Result<L2Function> {
    let n = space.len();
    if !same_arc(&a.manifold, &b.manifold) {
        return Err(Error::ManifoldMismatch);
    }
    let mut slots: Vec<Option<Point>> = vec![None; n];
    for part in [a, b] {
        for ((&i, p), &w) in part.indices.iter().zip(&part.points).zip(&part.weights) {
            if i >= n || slots[i].is_some() || w != space.weight(i) {
                return Err(Error::SpaceMismatch);
            }
            slots[i] = Some(p.clone());
        }
    }
    let points = slots.into_iter().collect::<Option<Vec<_>>>().ok_or(Error::SpaceMismatch)?;
    L2Function::new(space, a.manifold.clone(), points)
}

/// `f ↦ (f₁, f₂)` for a two-factor product target.
pub fn product_split(f: &L2Function) -> Result<(L2Function, L2Function)> {
    let ManifoldSpec::Product(factors) = f.manifold.as_ref() else {
        return Err(Error::NotAProduct(format!("{:?}", f.manifold)));
    };
    if factors.len() != 2 {
        return Err(Error::NotAProduct(format!("{} factors, expected 2", factors.len())));
    }
    let (mut first, mut second) = (Vec::with_capacity(f.len()), Vec::with_capacity(f.len()));
    for p in &f.points {
        let mut parts = f.manifold.split_point(p)?.into_iter();
        first.push(parts.next().unwrap());
        second.push(parts.next().unwrap());
    }
    Ok((
        L2Function::from_parts(f.space.clone(), Arc::new(factors[0].clone()), first),
        L2Function::from_parts(f.space.clone(), Arc::new(factors[1].clone()), second),
    ))
}

/// Inverse of [`product_split`].
pub fn product_glue(f1: &L2Function, f2: &L2Function) -> Result<L2Function> {
    if !same_arc(&f1.space, &f2.space) {
        return Err(Error::SpaceMismatch);
    }
    let manifold = Arc::new(ManifoldSpec::product(vec![
        f1.manifold.as_ref().clone(),
        f2.manifold.as_ref().clone(),
    ]));
    let points = f1
        .points
        .iter()
        .zip(&f2.points)
        .map(|(a, b)| manifold.join_point(&[a.clone(), b.clone()]))
        .collect::<Result<Vec<_>>>()?;
    Ok(L2Function::from_parts(f1.space.clone(), manifold, points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

    fn pt(v: &[f64]) -> Point {
        Point::new(v.to_vec())
    }

    fn s2() -> Arc<ManifoldSpec> {
        Arc::new(ManifoldSpec::sphere(2))
    }

    fn uniform(n: usize) -> Arc<ProbSpace> {
        Arc::new(ProbSpace::uniform_interval(n))
    }

    fn space_of(w: &[f64]) -> Arc<ProbSpace> {
        Arc::new(ProbSpace::new(w.to_vec()).unwrap())
    }

    const NORTH: [f64; 3] = [0.0, 0.0, 1.0];
    const EAST: [f64; 3] = [1.0, 0.0, 0.0];

    #[test]
    fn d_l2_examples() {
        let (sp, m) = (uniform(2), s2());
        let f = L2Function::new(sp.clone(), m.clone(), vec![pt(&NORTH), pt(&NORTH)]).unwrap();
        let g = L2Function::new(sp.clone(), m.clone(), vec![pt(&EAST), pt(&NORTH)]).unwrap();
        assert_eq!(d_l2(&f, &f).unwrap(), 0.0);
        assert!((d_l2(&f, &g).unwrap() - FRAC_PI_2 / SQRT_2).abs() < 1e-15);
        let cx = L2Function::constant(sp.clone(), m.clone(), pt(&NORTH)).unwrap();
        let cy = L2Function::constant(sp.clone(), m.clone(), pt(&EAST)).unwrap();
        assert!((d_l2(&cx, &cy).unwrap() - FRAC_PI_2).abs() < 1e-15);
        let other = L2Function::constant(uniform(3), m.clone(), pt(&NORTH)).unwrap();
        assert_eq!(d_l2(&f, &other), Err(Error::SpaceMismatch));
        let e = L2Function::constant(sp, Arc::new(ManifoldSpec::euclidean(3)), pt(&NORTH)).unwrap();
        assert_eq!(d_l2(&f, &e), Err(Error::ManifoldMismatch));
    }

    #[test]
    fn d_eta_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sp = space_of(&[0.1, 0.2, 0.3, 0.4]);
        let f = L2Function::random(sp.clone(), s2(), &mut rng);
        let g = L2Function::random(sp.clone(), s2(), &mut rng);
        let ones = DensityFn::constant(4, 1.0).unwrap();
        assert!((d_eta(&ones, &f, &g).unwrap() - d_l2(&f, &g).unwrap()).abs() < 1e-15);
        assert_eq!(d_eta(&DensityFn::constant(4, 0.0).unwrap(), &f, &g).unwrap(), 0.0);
        let ind = DensityFn::indicator(4, &[1, 3]).unwrap();
        let direct: f64 = [1, 3]
            .iter()
            .map(|&i| sp.weight(i) * f.manifold().dist(f.point(i), g.point(i)).unwrap().powi(2))
            .sum();
        assert!((d_eta(&ind, &f, &g).unwrap() - direct.sqrt()).abs() < 1e-15);
        assert_eq!(d_eta(&DensityFn::constant(3, 1.0).unwrap(), &f, &g), Err(Error::SpaceMismatch));
    }

    #[test]
    fn geodesic_examples() {
        let (sp, m) = (uniform(2), s2());
        let cx = L2Function::constant(sp.clone(), m.clone(), pt(&NORTH)).unwrap();
        let cy = L2Function::constant(sp.clone(), m.clone(), pt(&EAST)).unwrap();
        let g = geodesic(&cx, &cy).unwrap();
        assert!(g.alpha().iter().all(|a| (a - 1.0).abs() < 1e-15));
        let mid = g.eval(0.5).unwrap();
        let expect = m.geodesic_point(&pt(&NORTH), &pt(&EAST), 0.5).unwrap();
        assert!(mid.points().iter().all(|p| *p == expect));
        assert_eq!(g.eval(0.0).unwrap(), cx);
        assert_eq!(g.eval(1.0).unwrap(), cy);
        assert_eq!(g.eval(-0.1), Err(Error::OutOfRange(-0.1)));

        let moved = cx.with_point(0, pt(&EAST)).unwrap();
        let g = geodesic(&cx, &moved).unwrap();
        assert!((g.alpha()[0] - SQRT_2).abs() < 1e-15);
        assert_eq!(g.alpha()[1], 0.0);
        assert!((g.alpha_norm_sq() - 1.0).abs() < 1e-15);

        assert_eq!(geodesic(&cx, &cx), Err(Error::IdenticalEndpoints));
        let south = L2Function::constant(sp, m, pt(&[0.0, 0.0, -1.0])).unwrap();
        assert_eq!(geodesic(&cx, &south), Err(Error::NonUniqueGeodesic));
    }

    #[test]
    fn speed_law_on_random_sphere_geodesic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sp = uniform(7);
        let f = L2Function::random(sp.clone(), s2(), &mut rng);
        let g = L2Function::random(sp, s2(), &mut rng);
        let sigma = geodesic(&f, &g).unwrap();
        let d = d_l2(&sigma.eval(0.25).unwrap(), &sigma.eval(0.75).unwrap()).unwrap();
        assert!((d - 0.5 * sigma.length()).abs() < 1e-8);
    }

    #[test]
    fn analytic_angle_examples() {
        let (sp, m) = (uniform(2), s2());
        let f = L2Function::constant(sp.clone(), m.clone(), pt(&NORTH)).unwrap();
        let g1 = f.with_point(0, pt(&EAST)).unwrap();
        let g2 = f.with_point(1, pt(&[0.0, 1.0, 0.0])).unwrap();
        let s1 = geodesic(&f, &g1).unwrap();
        let s2g = geodesic(&f, &g2).unwrap();
        assert!(alexandrov_angle_analytic(&s1, &s1).unwrap().abs() < 1e-7);
        assert!((alexandrov_angle_analytic(&s1, &s2g).unwrap() - FRAC_PI_2).abs() < 1e-15);
        // equal α and equal per-atom angle θ collapse to θ
        let theta: f64 = 1.1;
        let a = f.clone();
        let b1 = L2Function::constant(sp.clone(), m.clone(), pt(&EAST)).unwrap();
        let b2 = L2Function::constant(sp.clone(), m.clone(), pt(&[theta.cos(), theta.sin(), 0.0])).unwrap();
        let ang = alexandrov_angle_analytic(&geodesic(&a, &b1).unwrap(), &geodesic(&a, &b2).unwrap()).unwrap();
        assert!((ang - theta).abs() < 1e-12);
        let elsewhere = geodesic(&g1, &f).unwrap();
        assert_eq!(alexandrov_angle_analytic(&s1, &elsewhere), Err(Error::MismatchedBasepoint));
    }

    #[test]
    fn numeric_angle_examples() {
        let scales = [1e-1, 5e-2, 2.5e-2, 1.25e-2];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sp = uniform(5);
        let f = L2Function::random(sp.clone(), s2(), &mut rng);
        let g = L2Function::random(sp.clone(), s2(), &mut rng);
        let s = geodesic(&f, &g).unwrap();
        let tr = alexandrov_angle_numeric(&f, &s, &s, &scales).unwrap();
        assert!(tr.angles.iter().all(|a| a.abs() < 1e-6));

        // reversal through an interior point on a Euclidean target
        let e = Arc::new(ManifoldSpec::euclidean(2));
        let a = L2Function::random(sp.clone(), e.clone(), &mut rng);
        let b = L2Function::random(sp.clone(), e.clone(), &mut rng);
        let mid = geodesic(&a, &b).unwrap().eval(0.5).unwrap();
        let fwd = geodesic(&mid, &b).unwrap();
        let back = geodesic(&mid, &a).unwrap();
        let tr = alexandrov_angle_numeric(&mid, &fwd, &back, &scales).unwrap();
        assert!(tr.angles.iter().all(|x| (x - PI).abs() < 1e-6));

        assert_eq!(
            alexandrov_angle_numeric(&a, &fwd, &back, &scales),
            Err(Error::MismatchedBasepoint)
        );
        assert!(alexandrov_angle_numeric(&mid, &fwd, &back, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn numeric_angle_converges_to_closed_form() {
        let scales: Vec<f64> = (0..8).map(|k| 1e-3 * 2f64.powi(7 - k)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for m in [ManifoldSpec::sphere(2), ManifoldSpec::hyperbolic(2)] {
            let m = Arc::new(m);
            for n in [1, 3, 9] {
                let sp = uniform(n);
                let f = L2Function::random(sp.clone(), m.clone(), &mut rng);
                let s1 = geodesic(&f, &L2Function::random(sp.clone(), m.clone(), &mut rng)).unwrap();
                let s2g = geodesic(&f, &L2Function::random(sp.clone(), m.clone(), &mut rng)).unwrap();
                let tr = alexandrov_angle_numeric(&f, &s1, &s2g, &scales).unwrap();
                let exact = alexandrov_angle_analytic(&s1, &s2g).unwrap();
                assert!((tr.extrapolated - exact).abs() < 1e-3);
                assert!(tr.differences_decreasing_below(1e-2, 1e-12), "{:?}", tr.diffs);
            }
        }
    }

    #[test]
    fn product_target_angle_additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (x, y) = (ManifoldSpec::sphere(2), ManifoldSpec::hyperbolic(2));
        let prod = Arc::new(ManifoldSpec::product(vec![x.clone(), y.clone()]));
        let sp = space_of(&[0.5, 0.25, 0.25]);
        for _ in 0..20 {
            let f = L2Function::random(sp.clone(), prod.clone(), &mut rng);
            let g1 = L2Function::random(sp.clone(), prod.clone(), &mut rng);
            let g2 = L2Function::random(sp.clone(), prod.clone(), &mut rng);
            let (s1, s2g) = (geodesic(&f, &g1).unwrap(), geodesic(&f, &g2).unwrap());
            let lhs = alexandrov_angle_analytic(&s1, &s2g).unwrap().cos();
            // per factor: Σ p_i α1_i α2_i Σ_k β1_ik β2_ik cos θ_ik
            let (f1, f2) = product_split(&f).unwrap();
            let (a1, a2) = product_split(&g1).unwrap();
            let (b1, b2) = product_split(&g2).unwrap();
            let mut rhs = 0.0;
            for (base, e1, e2, m) in [(&f1, &a1, &b1, &x), (&f2, &a2, &b2, &y)] {
                for i in 0..3 {
                    let d1 = m.dist(base.point(i), e1.point(i)).unwrap();
                    let d2 = m.dist(base.point(i), e2.point(i)).unwrap();
                    let th = m.riemannian_angle(base.point(i), e1.point(i), e2.point(i)).unwrap();
                    rhs += sp.weight(i) * d1 * d2 * th.cos() / (s1.length() * s2g.length());
                }
            }
            assert!((lhs - rhs).abs() < 1e-10);
        }
    }

    #[test]
    fn simple_embed_examples() {
        let (sp, m) = (uniform(4), s2());
        let triv = Partition::trivial(4);
        let f = simple_embed(sp.clone(), m.clone(), &triv, &[pt(&NORTH)]).unwrap();
        assert_eq!(f, L2Function::constant(sp.clone(), m.clone(), pt(&NORTH)).unwrap());
        let halves = Partition::new(4, vec![vec![0, 1], vec![2, 3]]).unwrap();
        let (p, q) = (pt(&NORTH), pt(&EAST));
        let a = simple_embed(sp.clone(), m.clone(), &halves, &[p.clone(), p.clone()]).unwrap();
        let b = simple_embed(sp.clone(), m.clone(), &halves, &[q.clone(), p.clone()]).unwrap();
        assert!((d_l2(&a, &b).unwrap() - m.dist(&p, &q).unwrap() / SQRT_2).abs() < 1e-15);
        assert_eq!(d_l2(&a, &a).unwrap(), 0.0);
        assert!(matches!(
            simple_embed(sp, m, &halves, &[p]),
            Err(Error::ArityMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn restrict_split_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sp = space_of(&[0.1, 0.1, 0.2, 0.2, 0.15, 0.25]);
        let f = L2Function::random(sp.clone(), s2(), &mut rng);
        let g = L2Function::random(sp.clone(), s2(), &mut rng);
        let set = [0, 3, 4];
        let (fa, fc) = restrict_split(&f, &set).unwrap();
        let (ga, gc) = restrict_split(&g, &set).unwrap();
        assert_eq!(glue(sp.clone(), &fa, &fc).unwrap(), f);
        let total = d_l2(&f, &g).unwrap().powi(2);
        assert!((fa.dist(&ga).unwrap().powi(2) + fc.dist(&gc).unwrap().powi(2) - total).abs() < 1e-12);

        let cx = L2Function::constant(sp.clone(), s2(), pt(&NORTH)).unwrap();
        let cy = L2Function::constant(sp.clone(), s2(), pt(&EAST)).unwrap();
        let (xa, _) = restrict_split(&cx, &set).unwrap();
        let (ya, _) = restrict_split(&cy, &set).unwrap();
        assert!((xa.dist(&ya).unwrap().powi(2) - sp.mass(&set) * FRAC_PI_2.powi(2)).abs() < 1e-15);
        assert!((xa.normalized().unwrap().space().total() - 1.0).abs() < 1e-15);

        assert_eq!(restrict_split(&f, &[]), Err(Error::EmptyOrFullSubset));
        assert_eq!(restrict_split(&f, &[0, 1, 2, 3, 4, 5]), Err(Error::EmptyOrFullSubset));
    }

    #[test]
    fn product_split_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let prod = Arc::new(ManifoldSpec::product(vec![ManifoldSpec::sphere(2), ManifoldSpec::sphere(2)]));
        let sp = uniform(5);
        for _ in 0..20 {
            let f = L2Function::random(sp.clone(), prod.clone(), &mut rng);
            let g = L2Function::random(sp.clone(), prod.clone(), &mut rng);
            let (f1, f2) = product_split(&f).unwrap();
            let (g1, g2) = product_split(&g).unwrap();
            let lhs = d_l2(&f, &g).unwrap().powi(2);
            let rhs = d_l2(&f1, &g1).unwrap().powi(2) + d_l2(&f2, &g2).unwrap().powi(2);
            assert!((lhs - rhs).abs() < 1e-12);
            assert_eq!(product_glue(&f1, &f2).unwrap(), f);
            let h = product_glue(&g1, &f2).unwrap();
            let (_, h2) = product_split(&h).unwrap();
            assert_eq!(d_l2(&h2, &f2).unwrap(), 0.0);
        }
        let c = L2Function::constant(sp.clone(), prod.clone(), prod.base_point()).unwrap();
        let (c1, c2) = product_split(&c).unwrap();
        assert!(c1.points().iter().all(|p| p == c1.point(0)));
        assert!(c2.points().iter().all(|p| p == c2.point(0)));
        let flat = L2Function::random(sp, s2(), &mut rng);
        assert!(matches!(product_split(&flat), Err(Error::NotAProduct(_))));
    }

    #[test]
    fn serde_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = L2Function::random(uniform(3), s2(), &mut rng);
        let s = serde_json::to_string(&f).unwrap();
        assert!(s.starts_with(r#"{"space":{"weights":"#));
        let back: L2Function = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        let bad = r#"{"space":{"weights":[1.0]},"manifold":{"sphere":{"dim":2}},"points":[[1.0,1.0,0.0]]}"#;
        assert!(serde_json::from_str::<L2Function>(bad).is_err());
    }

    fn arb_case() -> impl Strategy<Value = (u64, usize, usize)> {
        (any::<u64>(), 1usize..10, 0usize..3)
    }

    fn target(k: usize) -> Arc<ManifoldSpec> {
        Arc::new(match k {
            0 => ManifoldSpec::sphere(2),
            1 => ManifoldSpec::hyperbolic(2),
            _ => ManifoldSpec::euclidean(3),
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn d_l2_metric_axioms((seed, n, k) in arb_case()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (sp, m) = (uniform(n), target(k));
            let f = L2Function::random(sp.clone(), m.clone(), &mut rng);
            let g = L2Function::random(sp.clone(), m.clone(), &mut rng);
            let h = L2Function::random(sp, m, &mut rng);
            let (fg, gh, fh) = (d_l2(&f, &g).unwrap(), d_l2(&g, &h).unwrap(), d_l2(&f, &h).unwrap());
            prop_assert!(fg >= 0.0);
            prop_assert!((fg - d_l2(&g, &f).unwrap()).abs() < 1e-12);
            prop_assert!(fh <= fg + gh + 1e-9);
        }

        #[test]
        fn geodesics_satisfy_both_halves((seed, n, k) in arb_case(), s in 0.0f64..=1.0, t in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (sp, m) = (uniform(n), target(k));
            let f = L2Function::random(sp.clone(), m.clone(), &mut rng);
            let g = L2Function::random(sp, m, &mut rng);
            let sigma = geodesic(&f, &g).unwrap();
            prop_assert!((sigma.alpha_norm_sq() - 1.0).abs() < 1e-10);
            let d = d_l2(&sigma.eval(s).unwrap(), &sigma.eval(t).unwrap()).unwrap();
            prop_assert!((d - (s - t).abs() * sigma.length()).abs() < 1e-8);
        }

        #[test]
        fn d_eta_bounds_and_complement((seed, n, k) in arb_case(), raw in prop::collection::vec(0.0f64..=1.0, 10)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (sp, m) = (uniform(n), target(k));
            let f = L2Function::random(sp.clone(), m.clone(), &mut rng);
            let g = L2Function::random(sp, m, &mut rng);
            let eta = DensityFn::new(raw[..n].to_vec()).unwrap();
            let (de, dl) = (d_eta(&eta, &f, &g).unwrap(), d_l2(&f, &g).unwrap());
            prop_assert!(de <= eta.max().sqrt() * dl + 1e-12);
            let dc = d_eta(&eta.complement().unwrap(), &f, &g).unwrap();
            prop_assert!((de * de + dc * dc - dl * dl).abs() < 1e-12 * (1.0 + dl * dl));
        }
    }
}
