//! Affine maps out of `L²(Ω, M)` seen only through distances in the target.
//!
//! An affine map `F` is determined at desk scale by a density `η` with
//! `d_Y(Ff, Fg)² = Σ η_i p_i d_M(f_i, g_i)²`. The routines here recover `η`
//! from single-atom probes and test that identity, its additivity, and the
//! Lipschitz bound `η ≤ ‖F‖²`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::l2::{d_eta, d_l2, L2Function};
use crate::manifold::{ManifoldSpec, Point};
use crate::measure::{compensated_sum, DensityFn, ProbSpace};
use crate::tol;

/// A map `F: L²(Ω, M) → Y` known only through `forward` and `d_Y`.
pub trait AffineOracle: Send + Sync {
    type Token;
    fn space(&self) -> &Arc<ProbSpace>;
    fn manifold(&self) -> &Arc<ManifoldSpec>;
    fn forward(&self, f: &L2Function) -> Result<Self::Token>;
    fn y_dist(&self, a: &Self::Token, b: &Self::Token) -> Result<f64>;
}

fn probe_pair(
    space: &Arc<ProbSpace>,
    manifold: &Arc<ManifoldSpec>,
    p: &Point,
    q: &Point,
    set: &[usize],
) -> Result<(L2Function, L2Function)> {
    let base = L2Function::constant(space.clone(), manifold.clone(), p.clone())?;
    let mut moved = base.points().to_vec();
    for &i in set {
        moved[i] = q.clone();
    }
    let moved = L2Function::new(space.clone(), manifold.clone(), moved)?;
    Ok((base, moved))
}

fn probe_distance(manifold: &ManifoldSpec, p: &Point, q: &Point) -> Result<f64> {
    let d = manifold.dist(p, q)?;
    if d == 0.0 {
        return Err(Error::DegenerateProbe);
    }
    Ok(d)
}

/// `η_i = d_Y(F(f_i), F(const p))² / (p_i d(p, p′)²)` where `f_i` is `p`
/// except `p′` at atom `i`.
pub fn recover_eta<O: AffineOracle + ?Sized>(oracle: &O, p: &Point, q: &Point) -> Result<DensityFn> {
    let (space, manifold) = (oracle.space(), oracle.manifold());
    let d = probe_distance(manifold, p, q)?;
    let base = L2Function::constant(space.clone(), manifold.clone(), p.clone())?;
    let base_token = oracle.forward(&base)?;
    let values = (0..space.len())
        .map(|i| {
            let y = oracle.y_dist(&oracle.forward(&base.with_point(i, q.clone())?)?, &base_token)?;
            Ok(y * y / (space.weight(i) * d * d))
        })
        .collect::<Result<Vec<_>>>()?;
    DensityFn::new(values)
}

/// Densities recovered from several probe pairs and their spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellDefinedness {
    pub etas: Vec<DensityFn>,
    /// `max |η_i(probe) − η_i(first probe)|`
    pub deviation: f64,
    pub not_affine: bool,
}

pub fn welldefinedness_check<O: AffineOracle + ?Sized>(
    oracle: &O,
    probe_pairs: &[(Point, Point)],
) -> Result<WellDefinedness> {
    if probe_pairs.len() < 2 {
        return Err(Error::InsufficientProbes {
            needed: 2,
            got: probe_pairs.len(),
        });
    }
    let etas = probe_pairs
        .iter()
        .map(|(p, q)| recover_eta(oracle, p, q))
        .collect::<Result<Vec<_>>>()?;
    let first = etas[0].values();
    let deviation = etas[1..]
        .iter()
        .flat_map(|e| e.values().iter().zip(first).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    Ok(WellDefinedness {
        etas,
        deviation,
        not_affine: deviation > tol::NOT_AFFINE,
    })
}

/// `max |d_Y(Ff, Fg)² − d_η(f, g)²|` over the samples.
pub fn verify_identity<O: AffineOracle + ?Sized>(
    oracle: &O,
    eta: &DensityFn,
    samples: &[(L2Function, L2Function)],
) -> Result<f64> {
    samples.iter().try_fold(0.0f64, |m, (f, g)| {
        let y = oracle.y_dist(&oracle.forward(f)?, &oracle.forward(g)?)?;
        let de = d_eta(eta, f, g)?;
        Ok(m.max((y * y - de * de).abs()))
    })
}

/// Seeded random function pairs.
pub fn random_pairs(
    space: &Arc<ProbSpace>,
    manifold: &Arc<ManifoldSpec>,
    count: usize,
    seed: u64,
) -> Vec<(L2Function, L2Function)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (
                L2Function::random(space.clone(), manifold.clone(), &mut rng),
                L2Function::random(space.clone(), manifold.clone(), &mut rng),
            )
        })
        .collect()
}

/// `L̂ = max d_Y(Ff, Fg) / d_{L²}(f, g)` over seeded random pairs and
/// pairs differing at a single atom.
pub fn estimate_lipschitz<O: AffineOracle + ?Sized>(oracle: &O, pairs: usize, seed: u64) -> Result<f64> {
    let (space, manifold) = (oracle.space(), oracle.manifold());
    let mut candidates = random_pairs(space, manifold, pairs, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5bd1_e995);
    for i in 0..space.len() {
        let p = manifold.sample_point(&mut rng);
        let q = manifold.sample_point(&mut rng);
        candidates.push(probe_pair(space, manifold, &p, &q, &[i])?);
    }
    candidates.iter().try_fold(0.0f64, |m, (f, g)| {
        let d = d_l2(f, g)?;
        if d == 0.0 {
            return Ok(m);
        }
        let y = oracle.y_dist(&oracle.forward(f)?, &oracle.forward(g)?)?;
        Ok(m.max(y / d))
    })
}

/// Checks on the set function `μ̃(A) = Σ_{i∈A} η_i p_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdditivityReport {
    /// `max |μ̃(A ⊔ B) − μ̃(A) − μ̃(B)|` with every term probed directly.
    pub additivity_residual: f64,
    /// `max |μ̃(A) − Σ_{i∈A} η_i p_i|` over the probed blocks.
    pub block_residual: f64,
    pub lipschitz: f64,
    pub max_eta: f64,
    pub bound_holds: bool,
}

/// Probes `μ̃` with two-block simple functions on seeded disjoint pairs
/// `(A, B)`, and compares `η` against the estimated Lipschitz constant.
pub fn additivity_and_bound<O: AffineOracle + ?Sized>(
    oracle: &O,
    eta: &DensityFn,
    trials: usize,
    seed: u64,
) -> Result<AdditivityReport> {
    let (space, manifold) = (oracle.space(), oracle.manifold());
    if eta.len() != space.len() {
        return Err(Error::SpaceMismatch);
    }
    let n = space.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = manifold.base_point();
    let q = crate::isometry_group::default_partner(manifold, &p, &mut rng);
    let d2 = manifold.dist(&p, &q)?.powi(2);
    let mu_probe = |set: &[usize]| -> Result<f64> {
        let (base, moved) = probe_pair(space, manifold, &p, &q, set)?;
        let y = oracle.y_dist(&oracle.forward(&moved)?, &oracle.forward(&base)?)?;
        Ok(y * y / d2)
    };
    let mu_eta = |set: &[usize]| compensated_sum(set.iter().map(|&i| eta.values()[i] * space.weight(i)));

    let (mut additivity_residual, mut block_residual) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        // label 0: outside, 1: A, 2: B
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..3u8)).collect();
        let a: Vec<usize> = (0..n).filter(|&i| labels[i] == 1).collect();
        let b: Vec<usize> = (0..n).filter(|&i| labels[i] == 2).collect();
        let ab: Vec<usize> = (0..n).filter(|&i| labels[i] != 0).collect();
        let (ma, mb, mab) = (mu_probe(&a)?, mu_probe(&b)?, mu_probe(&ab)?);
        additivity_residual = additivity_residual.max((mab - ma - mb).abs());
        for (set, m) in [(&a, ma), (&b, mb), (&ab, mab)] {
            block_residual = block_residual.max((m - mu_eta(set)).abs());
        }
    }
    let lipschitz = estimate_lipschitz(oracle, tol::LIPSCHITZ_PAIRS, seed)?;
    let max_eta = eta.max();
    Ok(AdditivityReport {
        additivity_residual,
        block_residual,
        lipschitz,
        max_eta,
        bound_holds: eta
            .values()
            .iter()
            .all(|&e| e <= lipschitz * lipschitz + tol::LIPSCHITZ_SLACK),
    })
}

/// Per-factor constants of a map out of `M₁ × … × M_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorConstants {
    pub constants: Vec<f64>,
    /// `max |d_Y² − Σ c_i² d_i²|` over the random pairs.
    pub mixed_residual: f64,
}

/// Recovers `c_i = d_Y(F(q with factor i moved), F(q)) / d_{M_i}` on a
/// single-atom space and tests `d_Y² = Σ c_i² d_i²` on random pairs.
///
/// `basepoints[i]` is the pair `(q_i, q_i′)` used on factor `i`.
pub fn factor_constants<O: AffineOracle + ?Sized>(
    oracle: &O,
    basepoints: &[(Point, Point)],
    pairs: usize,
    seed: u64,
) -> Result<FactorConstants> {
    let (space, manifold) = (oracle.space(), oracle.manifold());
    let ManifoldSpec::Product(factors) = manifold.as_ref() else {
        return Err(Error::NotAProduct(format!("{manifold:?}")));
    };
    if space.len() != 1 {
        return Err(Error::InvalidSpec("factor constants are defined on a single-atom space".into()));
    }
    if basepoints.len() != factors.len() {
        return Err(Error::ArityMismatch {
            expected: factors.len(),
            got: basepoints.len(),
        });
    }
    let origin: Vec<Point> = basepoints.iter().map(|(q, _)| q.clone()).collect();
    let lift = |parts: &[Point]| -> Result<L2Function> {
        L2Function::constant(space.clone(), manifold.clone(), manifold.join_point(parts)?)
    };
    let base_token = oracle.forward(&lift(&origin)?)?;
    let constants = factors
        .iter()
        .enumerate()
        .map(|(i, factor)| {
            let d = probe_distance(factor, &basepoints[i].0, &basepoints[i].1)?;
            let mut parts = origin.clone();
            parts[i] = basepoints[i].1.clone();
            Ok(oracle.y_dist(&oracle.forward(&lift(&parts)?)?, &base_token)? / d)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut mixed_residual = 0.0f64;
    for (f, g) in random_pairs(space, manifold, pairs, seed) {
        let y = oracle.y_dist(&oracle.forward(&f)?, &oracle.forward(&g)?)?;
        let ds = manifold.factor_distances(f.point(0), g.point(0))?;
        let predicted = compensated_sum(constants.iter().zip(&ds).map(|(c, d)| c * c * d * d));
        mixed_residual = mixed_residual.max((y * y - predicted).abs());
    }
    if mixed_residual > tol::MIXED_IDENTITY_FAILURE {
        return Err(Error::InconsistentConstants {
            residual: mixed_residual,
        });
    }
    Ok(FactorConstants {
        constants,
        mixed_residual,
    })
}

/// Everything the `eta-recover` command reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineAnalysis {
    pub eta: DensityFn,
    pub welldefinedness: WellDefinedness,
    pub identity_residual: f64,
    pub additivity: AdditivityReport,
    pub affine: bool,
}

/// Runs recovery, probe independence, the distance identity and the
/// Lipschitz bound in one pass.
pub fn analyze<O: AffineOracle + ?Sized>(
    oracle: &O,
    probe_pairs: &[(Point, Point)],
    samples: usize,
    seed: u64,
) -> Result<AffineAnalysis> {
    let welldefinedness = welldefinedness_check(oracle, probe_pairs)?;
    let eta = welldefinedness.etas[0].clone();
    let pairs = random_pairs(oracle.space(), oracle.manifold(), samples, seed);
    let identity_residual = verify_identity(oracle, &eta, &pairs)?;
    let additivity = additivity_and_bound(oracle, &eta, 20, seed)?;
    let affine = !welldefinedness.not_affine
        && identity_residual <= tol::AFFINE_IDENTITY
        && additivity.bound_holds
        && additivity.additivity_residual <= tol::AFFINE_IDENTITY;
    Ok(AffineAnalysis {
        eta,
        welldefinedness,
        identity_residual,
        additivity,
        affine,
    })
}

/// The affine maps (and one deliberately non-affine control) shipped with the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    /// `F = id`, `η ≡ 1`.
    Identity,
    /// `f ↦ f|_A` with ambient weights, `η = χ_A`.
    Restriction(Vec<usize>),
    /// `Y = (L²(Ω, M), d_η)`.
    Density(DensityFn),
    /// Everything to one point, `η ≡ 0`.
    Constant,
    /// Pointwise projection onto a closed geodesic ball. Not affine.
    BallClip { center: Point, radius: f64 },
    /// Product target with factor `i` rescaled by `c_i`.
    WeightedProduct(Vec<f64>),
}

impl Builtin {
    pub fn name(&self) -> &'static str {
        match self {
            Builtin::Identity => "identity",
            Builtin::Restriction(_) => "restriction",
            Builtin::Density(_) => "density",
            Builtin::Constant => "constant",
            Builtin::BallClip { .. } => "ball_clip",
            Builtin::WeightedProduct(_) => "weighted_product",
        }
    }
}

/// A [`Builtin`] bound to a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinOracle {
    space: Arc<ProbSpace>,
    manifold: Arc<ManifoldSpec>,
    kind: Builtin,
}

impl BuiltinOracle {
    pub fn new(space: Arc<ProbSpace>, manifold: Arc<ManifoldSpec>, kind: Builtin) -> Result<Self> {
        manifold.validate()?;
        let n = space.len();
        match &kind {
            Builtin::Restriction(set) => {
                if let Some(&i) = set.iter().find(|&&i| i >= n) {
                    return Err(Error::LengthMismatch { expected: n, got: i + 1 });
                }
            }
            Builtin::Density(eta) if eta.len() != n => {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: eta.len(),
                })
            }
            Builtin::BallClip { center, radius } => {
                manifold.check_point(center)?;
                if !(*radius > 0.0) {
                    return Err(Error::InvalidSpec(format!("ball radius {radius} must be positive")));
                }
            }
            Builtin::WeightedProduct(c) => {
                let ManifoldSpec::Product(fs) = manifold.as_ref() else {
                    return Err(Error::NotAProduct(format!("{manifold:?}")));
                };
                if c.len() != fs.len() {
                    return Err(Error::ArityMismatch {
                        expected: fs.len(),
                        got: c.len(),
                    });
                }
                if c.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                    return Err(Error::InvalidSpec("factor weights must be finite and nonnegative".into()));
                }
            }
            _ => {}
        }
        Ok(BuiltinOracle { space, manifold, kind })
    }

    pub fn kind(&self) -> &Builtin {
        &self.kind
    }

    fn clip(&self, center: &Point, radius: f64, x: &Point) -> Result<Point> {
        let d = self.manifold.dist_unchecked(center.coords(), x.coords());
        if d <= radius {
            return Ok(x.clone());
        }
        self.manifold
            .geodesic_unchecked(center.coords(), x.coords(), radius / d)
            .map(Point::new)
    }
}

impl AffineOracle for BuiltinOracle {
    type Token = L2Function;

    fn space(&self) -> &Arc<ProbSpace> {
        &self.space
    }

    fn manifold(&self) -> &Arc<ManifoldSpec> {
        &self.manifold
    }

    fn forward(&self, f: &L2Function) -> Result<L2Function> {
        if **f.space() != *self.space || **f.manifold() != *self.manifold {
            return Err(Error::SpaceMismatch);
        }
        match &self.kind {
            Builtin::Constant => L2Function::constant(self.space.clone(), self.manifold.clone(), self.manifold.base_point()),
            Builtin::BallClip { center, radius } => {
                let points = f
                    .points()
                    .iter()
                    .map(|x| self.clip(center, *radius, x))
                    .collect::<Result<Vec<_>>>()?;
                Ok(L2Function::from_parts(self.space.clone(), self.manifold.clone(), points))
            }
            _ => Ok(f.clone()),
        }
    }

    fn y_dist(&self, a: &L2Function, b: &L2Function) -> Result<f64> {
        match &self.kind {
            Builtin::Identity | Builtin::Constant | Builtin::BallClip { .. } => d_l2(a, b),
            Builtin::Restriction(set) => d_eta(&DensityFn::indicator(self.space.len(), set)?, a, b),
            Builtin::Density(eta) => d_eta(eta, a, b),
            Builtin::WeightedProduct(c) => {
                a.same_domain(b)?;
                let total = (0..a.len()).try_fold(0.0, |acc, j| {
                    let ds = self.manifold.factor_distances(a.point(j), b.point(j))?;
                    let s = compensated_sum(c.iter().zip(&ds).map(|(c, d)| c * c * d * d));
                    Ok::<_, Error>(acc + self.space.weight(j) * s)
                })?;
                Ok(total.sqrt())
            }
        }
    }
}

/// Random density with entries in `[0, hi]`.
pub fn random_density<R: Rng + ?Sized>(n: usize, hi: f64, rng: &mut R) -> DensityFn {
    DensityFn::new((0..n).map(|_| rng.random_range(0.0..=hi)).collect()).expect("entries are nonnegative")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn s2() -> Arc<ManifoldSpec> {
        Arc::new(ManifoldSpec::sphere(2))
    }

    fn space_of(w: &[f64]) -> Arc<ProbSpace> {
        Arc::new(ProbSpace::new(w.to_vec()).unwrap())
    }

    fn probes(m: &ManifoldSpec, seed: u64, k: usize) -> Vec<(Point, Point)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..k).map(|_| (m.sample_point(&mut rng), m.sample_point(&mut rng))).collect()
    }

    fn oracle(space: Arc<ProbSpace>, m: Arc<ManifoldSpec>, kind: Builtin) -> BuiltinOracle {
        BuiltinOracle::new(space, m, kind).unwrap()
    }

    #[test]
    fn recover_eta_examples() {
        let sp = space_of(&[0.2, 0.3, 0.5]);
        let pr = probes(&s2(), 1, 1).remove(0);
        let id = oracle(sp.clone(), s2(), Builtin::Identity);
        for v in recover_eta(&id, &pr.0, &pr.1).unwrap().values() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
        let res = oracle(sp.clone(), s2(), Builtin::Restriction(vec![0, 2]));
        let eta = recover_eta(&res, &pr.0, &pr.1).unwrap();
        for (v, e) in eta.values().iter().zip([1.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*v, e, epsilon = 1e-12);
        }
        let star = DensityFn::new(vec![0.5, 1.5, 1.0]).unwrap();
        let dens = oracle(sp.clone(), s2(), Builtin::Density(star.clone()));
        let eta = recover_eta(&dens, &pr.0, &pr.1).unwrap();
        for (v, e) in eta.values().iter().zip(star.values()) {
            assert_abs_diff_eq!(*v, *e, epsilon = 1e-10);
        }
        assert_eq!(recover_eta(&dens, &pr.0, &pr.0), Err(Error::DegenerateProbe));
    }

    #[test]
    fn welldefinedness_examples() {
        let sp = space_of(&[0.2, 0.3, 0.5]);
        let star = DensityFn::new(vec![0.5, 1.5, 1.0]).unwrap();
        let dens = oracle(sp.clone(), s2(), Builtin::Density(star));
        let w = welldefinedness_check(&dens, &probes(&s2(), 2, 2)).unwrap();
        assert!(w.deviation <= 1e-9 && !w.not_affine);

        let c = oracle(sp.clone(), s2(), Builtin::Constant);
        let w = welldefinedness_check(&c, &probes(&s2(), 3, 3)).unwrap();
        assert_eq!(w.deviation, 0.0);
        assert!(w.etas.iter().all(|e| e.values().iter().all(|&v| v == 0.0)));

        let e3 = Arc::new(ManifoldSpec::euclidean(3));
        let center = e3.base_point();
        let clip = oracle(sp, e3.clone(), Builtin::BallClip { center: center.clone(), radius: 1.0 });
        let dir = Point::new(vec![1.0, 0.0, 0.0]);
        let near = e3.point_at_distance(&center, &dir, 0.5).unwrap();
        let far = e3.point_at_distance(&center, &dir, 3.0).unwrap();
        let w = welldefinedness_check(&clip, &[(center.clone(), near), (center, far)]).unwrap();
        assert!(w.not_affine && w.deviation > 1e-3);

        assert!(matches!(
            welldefinedness_check(&c, &probes(&s2(), 3, 1)),
            Err(Error::InsufficientProbes { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn verify_identity_examples() {
        let sp = space_of(&[0.25, 0.25, 0.5]);
        let pairs = random_pairs(&sp, &s2(), 30, 4);
        let star = DensityFn::new(vec![0.5, 1.5, 1.0]).unwrap();
        let dens = oracle(sp.clone(), s2(), Builtin::Density(star.clone()));
        assert!(verify_identity(&dens, &star, &pairs).unwrap() <= 1e-10);
        let c = oracle(sp.clone(), s2(), Builtin::Constant);
        assert_eq!(verify_identity(&c, &DensityFn::constant(3, 0.0).unwrap(), &pairs).unwrap(), 0.0);
        let id = oracle(sp, s2(), Builtin::Identity);
        assert!(verify_identity(&id, &DensityFn::constant(3, 1.0).unwrap(), &pairs).unwrap() <= 1e-10);
    }

    #[test]
    fn additivity_examples() {
        let sp = space_of(&[0.1, 0.2, 0.3, 0.4]);
        let id = oracle(sp.clone(), s2(), Builtin::Identity);
        let r = additivity_and_bound(&id, &DensityFn::constant(4, 1.0).unwrap(), 20, 5).unwrap();
        assert!(r.additivity_residual <= 1e-10 && r.block_residual <= 1e-10);
        assert_abs_diff_eq!(r.lipschitz, 1.0, epsilon = 1e-9);
        assert!(r.bound_holds);

        let star = DensityFn::new(vec![0.5, 1.5, 1.0, 0.2]).unwrap();
        let dens = oracle(sp, s2(), Builtin::Density(star.clone()));
        let r = additivity_and_bound(&dens, &star, 20, 6).unwrap();
        assert!(r.lipschitz.powi(2) >= 1.5 - 1e-6);
        assert!(r.bound_holds && r.additivity_residual <= 1e-10);
    }

    #[test]
    fn factor_constant_examples() {
        let sp = Arc::new(ProbSpace::new(vec![1.0]).unwrap());
        let s = ManifoldSpec::sphere(2);
        let prod = Arc::new(ManifoldSpec::product(vec![s.clone(), s.clone()]));
        let bps = probes(&s, 7, 2);
        for (planted, expect) in [
            (vec![1.0, 0.0], vec![1.0, 0.0]),
            (vec![2.5, 2.5], vec![2.5, 2.5]),
            (vec![1.0, 0.5], vec![1.0, 0.5]),
        ] {
            let o = oracle(sp.clone(), prod.clone(), Builtin::WeightedProduct(planted));
            let fc = factor_constants(&o, &bps, 100, 8).unwrap();
            for (c, e) in fc.constants.iter().zip(&expect) {
                assert_abs_diff_eq!(*c, *e, epsilon = 1e-9);
            }
            assert!(fc.mixed_residual <= 1e-8);
        }
        let flat = oracle(sp.clone(), s2(), Builtin::Identity);
        assert!(matches!(factor_constants(&flat, &bps, 10, 0), Err(Error::NotAProduct(_))));

        // clipping one factor breaks the mixed identity
        let clip = oracle(
            sp,
            prod.clone(),
            Builtin::BallClip {
                center: prod.base_point(),
                radius: 0.3,
            },
        );
        let near = vec![(s.base_point(), s.point_at_distance(&s.base_point(), &Point::new(vec![0.0, 1.0, 0.0]), 0.1).unwrap()); 2];
        assert!(matches!(
            factor_constants(&clip, &near, 100, 9),
            Err(Error::InconsistentConstants { .. })
        ));
    }

    #[test]
    fn analysis_verdicts() {
        let sp = space_of(&[0.5, 0.5]);
        let e2 = Arc::new(ManifoldSpec::euclidean(2));
        let dens = oracle(sp.clone(), e2.clone(), Builtin::Density(DensityFn::new(vec![0.3, 1.7]).unwrap()));
        assert!(analyze(&dens, &probes(&e2, 10, 2), 50, 1).unwrap().affine);
        let clip = oracle(
            sp,
            e2.clone(),
            Builtin::BallClip {
                center: e2.base_point(),
                radius: 0.5,
            },
        );
        assert!(!analyze(&clip, &probes(&e2, 10, 3), 50, 1).unwrap().affine);
    }

    #[test]
    fn builtin_validation() {
        let sp = space_of(&[0.5, 0.5]);
        assert!(BuiltinOracle::new(sp.clone(), s2(), Builtin::Restriction(vec![2])).is_err());
        assert!(BuiltinOracle::new(sp.clone(), s2(), Builtin::Density(DensityFn::constant(3, 1.0).unwrap())).is_err());
        assert!(matches!(
            BuiltinOracle::new(sp, s2(), Builtin::WeightedProduct(vec![1.0])),
            Err(Error::NotAProduct(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn recovery_inverts_density_oracles(seed in any::<u64>(), n in 1usize..=16) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sp = Arc::new(ProbSpace::uniform_interval(n));
            let star = random_density(n, 2.0, &mut rng);
            let o = oracle(sp, s2(), Builtin::Density(star.clone()));
            let pr = probes(&s2(), seed, 1).remove(0);
            let eta = recover_eta(&o, &pr.0, &pr.1).unwrap();
            for (a, b) in eta.values().iter().zip(star.values()) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
        }
    }
}
