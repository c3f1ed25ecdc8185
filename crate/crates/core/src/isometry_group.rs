//! The group `L²(Ω, Isom(M)) ⋊ Aut(Ω)` acting on `L²(Ω, M)`.
//!
//! An element is a pair `(φ, ρ)` acting by `γ(f)(i) = ρ(φ(i))(f(φ(i)))`.
//! Every closed-form operation below is derived from [`L2Isometry::apply`].

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::l2::{d_l2, L2Function};
use crate::manifold::{ManifoldIsometry, ManifoldSpec, Point};
use crate::measure::{compensated_sum, Automorphism, ProbSpace};
use crate::tol;

/// An element `(φ, ρ)` of the semidirect product.
#[derive(Debug, Clone, PartialEq)]
pub struct L2Isometry {
    space: Arc<ProbSpace>,
    manifold: Arc<ManifoldSpec>,
    phi: Automorphism,
    rho: Vec<ManifoldIsometry>,
}

/// JSON form `{"phi": [...], "rho": [...]}`; the space and manifold travel separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsometryRecord {
    pub phi: Vec<usize>,
    pub rho: Vec<ManifoldIsometry>,
}

impl Serialize for L2Isometry {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_record().serialize(s)
    }
}

impl L2Isometry {
    pub fn new(
        space: Arc<ProbSpace>,
        manifold: Arc<ManifoldSpec>,
        phi: Automorphism,
        rho: Vec<ManifoldIsometry>,
    ) -> Result<Self> {
        manifold.validate()?;
        if phi.len() != space.len() {
            return Err(Error::SpaceMismatch);
        }
        Automorphism::new(&space, phi.perm().to_vec())?;
        if rho.len() != space.len() {
            return Err(Error::ArityMismatch {
                expected: space.len(),
                got: rho.len(),
            });
        }
        for g in &rho {
            manifold.check_isometry(g)?;
        }
        Ok(L2Isometry {
            space,
            manifold,
            phi,
            rho,
        })
    }

    pub fn from_record(space: Arc<ProbSpace>, manifold: Arc<ManifoldSpec>, record: IsometryRecord) -> Result<Self> {
        let phi = Automorphism::new(&space, record.phi)?;
        L2Isometry::new(space, manifold, phi, record.rho)
    }

    pub fn to_record(&self) -> IsometryRecord {
        IsometryRecord {
            phi: self.phi.perm().to_vec(),
            rho: self.rho.clone(),
        }
    }

    pub fn identity(space: Arc<ProbSpace>, manifold: Arc<ManifoldSpec>) -> Self {
        let n = space.len();
        L2Isometry {
            rho: vec![manifold.identity_isometry(); n],
            phi: Automorphism::identity(n),
            space,
            manifold,
        }
    }

    /// The pure automorphism `f ↦ f ∘ φ`.
    pub fn from_automorphism(space: Arc<ProbSpace>, manifold: Arc<ManifoldSpec>, phi: Automorphism) -> Result<Self> {
        let rho = vec![manifold.identity_isometry(); space.len()];
        L2Isometry::new(space, manifold, phi, rho)
    }

    /// The pointwise family `f ↦ ρ ∘ f`.
    pub fn pointwise(space: Arc<ProbSpace>, manifold: Arc<ManifoldSpec>, rho: Vec<ManifoldIsometry>) -> Result<Self> {
        let phi = Automorphism::identity(space.len());
        L2Isometry::new(space, manifold, phi, rho)
    }

    pub fn random<R: Rng + ?Sized>(space: Arc<ProbSpace>, manifold: Arc<ManifoldSpec>, rng: &mut R) -> Self {
        let phi = Automorphism::random(&space, rng);
        let rho = (0..space.len()).map(|_| manifold.sample_isometry(rng)).collect();
        L2Isometry {
            space,
            manifold,
            phi,
            rho,
        }
    }

    pub fn space(&self) -> &Arc<ProbSpace> {
        &self.space
    }

    pub fn manifold(&self) -> &Arc<ManifoldSpec> {
        &self.manifold
    }

    pub fn phi(&self) -> &Automorphism {
        &self.phi
    }

    pub fn rho(&self) -> &[ManifoldIsometry] {
        &self.rho
    }

    fn check_compatible(&self, other: &L2Isometry) -> Result<()> {
        if self.space != other.space {
            return Err(Error::SpaceMismatch);
        }
        if self.manifold != other.manifold {
            return Err(Error::ManifoldMismatch);
        }
        Ok(())
    }

    /// `γ(f)(i) = ρ(φ(i))(f(φ(i)))`
    pub fn apply(&self, f: &L2Function) -> Result<L2Function> {
        if **f.space() != *self.space {
            return Err(Error::SpaceMismatch);
        }
        if **f.manifold() != *self.manifold {
            return Err(Error::ManifoldMismatch);
        }
        let points = (0..self.space.len())
            .map(|i| {
                let j = self.phi.image(i);
                self.manifold.apply_isometry_unchecked(&self.rho[j], f.point(j))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(L2Function::from_parts(f.space().clone(), f.manifold().clone(), points))
    }

    /// `self ∘ other`: `φ = φ₂ ∘ φ₁` and `ρ(k) = ρ₁(φ₂⁻¹(k)) ∘ ρ₂(k)`.
    pub fn compose(&self, other: &L2Isometry) -> Result<L2Isometry> {
        self.check_compatible(other)?;
        let phi = other.phi.compose(&self.phi)?;
        let other_inv = other.phi.inverse();
        let rho = (0..self.space.len())
            .map(|k| self.rho[other_inv.image(k)].compose(&other.rho[k]))
            .collect::<Result<Vec<_>>>()?;
        Ok(L2Isometry {
            space: self.space.clone(),
            manifold: self.manifold.clone(),
            phi,
            rho,
        })
    }

    /// `φ' = φ⁻¹` and `ρ'(k) = ρ(φ(k))⁻¹`.
    pub fn inverse(&self) -> L2Isometry {
        L2Isometry {
            space: self.space.clone(),
            manifold: self.manifold.clone(),
            phi: self.phi.inverse(),
            rho: (0..self.space.len())
                .map(|k| self.rho[self.phi.image(k)].inverse())
                .collect(),
        }
    }

    /// The pointwise family `σ` with `γ γ_τ γ⁻¹ = γ_σ`:
    /// `σ(i) = ρ(φ(i)) ∘ τ(φ(i)) ∘ ρ(φ(i))⁻¹`.
    pub fn conjugate_pointwise(&self, tau: &[ManifoldIsometry]) -> Result<Vec<ManifoldIsometry>> {
        if tau.len() != self.space.len() {
            return Err(Error::ArityMismatch {
                expected: self.space.len(),
                got: tau.len(),
            });
        }
        (0..tau.len())
            .map(|i| {
                let j = self.phi.image(i);
                self.rho[j].compose(&tau[j])?.compose(&self.rho[j].inverse())
            })
            .collect()
    }

    /// Largest entry-wise gap between the `ρ` data; infinite if the permutations differ.
    pub fn max_abs_diff(&self, other: &L2Isometry) -> Result<f64> {
        self.check_compatible(other)?;
        if self.phi != other.phi {
            return Ok(f64::INFINITY);
        }
        self.rho
            .iter()
            .zip(&other.rho)
            .try_fold(0.0f64, |m, (a, b)| Ok(m.max(a.max_abs_diff(b)?)))
    }
}

/// An opaque map `L²(Ω, M) → L²(Ω, M)`.
pub trait IsometryOracle: Send + Sync {
    fn space(&self) -> &Arc<ProbSpace>;
    fn manifold(&self) -> &Arc<ManifoldSpec>;
    fn call(&self, f: &L2Function) -> Result<L2Function>;
    /// Whether concurrent calls are safe and give the same results.
    fn is_reentrant(&self) -> bool {
        false
    }
}

impl IsometryOracle for L2Isometry {
    fn space(&self) -> &Arc<ProbSpace> {
        &self.space
    }

    fn manifold(&self) -> &Arc<ManifoldSpec> {
        &self.manifold
    }

    fn call(&self, f: &L2Function) -> Result<L2Function> {
        self.apply(f)
    }

    fn is_reentrant(&self) -> bool {
        true
    }
}

type OracleFn = dyn Fn(&L2Function) -> Result<L2Function> + Send + Sync;

/// Wraps a closure as an oracle.
pub struct FnOracle {
    space: Arc<ProbSpace>,
    manifold: Arc<ManifoldSpec>,
    f: Box<OracleFn>,
    reentrant: bool,
}

impl FnOracle {
    pub fn new<F>(space: Arc<ProbSpace>, manifold: Arc<ManifoldSpec>, reentrant: bool, f: F) -> Self
    where
        F: Fn(&L2Function) -> Result<L2Function> + Send + Sync + 'static,
    {
        FnOracle {
            space,
            manifold,
            f: Box::new(f),
            reentrant,
        }
    }
}

impl std::fmt::Debug for FnOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnOracle")
            .field("space", &self.space)
            .field("manifold", &self.manifold)
            .field("reentrant", &self.reentrant)
            .finish_non_exhaustive()
    }
}

impl IsometryOracle for FnOracle {
    fn space(&self) -> &Arc<ProbSpace> {
        &self.space
    }

    fn manifold(&self) -> &Arc<ManifoldSpec> {
        &self.manifold
    }

    fn call(&self, f: &L2Function) -> Result<L2Function> {
        (self.f)(f)
    }

    fn is_reentrant(&self) -> bool {
        self.reentrant
    }
}

fn call_checked<O: IsometryOracle + ?Sized>(oracle: &O, f: &L2Function) -> Result<L2Function> {
    let out = oracle.call(f)?;
    out.same_domain(f)?;
    Ok(out)
}

/// Outcome of [`validate_isometry`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsometryValidation {
    pub pairs: usize,
    pub max_deviation: f64,
    pub passed: bool,
}

/// Compares `d_{L²}(γf, γg)` with `d_{L²}(f, g)` on seeded random pairs.
pub fn validate_isometry<O: IsometryOracle + ?Sized>(oracle: &O, pairs: usize, seed: u64) -> Result<IsometryValidation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_deviation = 0.0f64;
    for _ in 0..pairs {
        let f = L2Function::random(oracle.space().clone(), oracle.manifold().clone(), &mut rng);
        let g = L2Function::random(oracle.space().clone(), oracle.manifold().clone(), &mut rng);
        let before = d_l2(&f, &g)?;
        let after = d_l2(&call_checked(oracle, &f)?, &call_checked(oracle, &g)?)?;
        max_deviation = max_deviation.max((after - before).abs());
    }
    Ok(IsometryValidation {
        pairs,
        max_deviation,
        passed: max_deviation <= tol::ISOMETRY_VALIDATION,
    })
}

/// Knobs for [`decompose`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposeOptions {
    /// Probe points `(p, p′)`; drawn at distance about 1 when absent.
    pub basepoints: Option<(Point, Point)>,
    pub seed: u64,
    /// Number of held-out random functions used for the final check.
    pub holdout: usize,
    /// Extra samples per atom beyond the minimum needed to fit `ρ(i)`.
    pub validation_points: usize,
    pub parallel: bool,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            basepoints: None,
            seed: 0,
            holdout: 20,
            validation_points: 5,
            parallel: false,
        }
    }
}

/// A recovered element together with its fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    pub isometry: L2Isometry,
    /// Worst sample residual of each fitted `ρ(i)`.
    pub fit_residuals: Vec<f64>,
    /// Worst `d_{L²}` gap between the oracle and the recovered element on held-out functions.
    pub holdout_residual: f64,
}

/// Draws a point at distance roughly 1 from `p`.
pub fn default_partner<R: Rng + ?Sized>(manifold: &ManifoldSpec, p: &Point, rng: &mut R) -> Point {
    let mut best: Option<(f64, Point)> = None;
    for _ in 0..10_000 {
        let q = manifold.sample_point(rng);
        let d = manifold.dist_unchecked(p.coords(), q.coords());
        if (0.8..=1.25).contains(&d) {
            return q;
        }
        let score = (d - 1.0).abs();
        if d > 0.0 && best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, q));
        }
    }
    best.map(|(_, q)| q).unwrap_or_else(|| manifold.sample_point(rng))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Atoms where `out` and `base` differ by more than the probe threshold.
fn difference_set(manifold: &ManifoldSpec, base: &L2Function, out: &L2Function, scale: f64) -> Vec<usize> {
    let threshold = tol::PROBE_DIFFERENCE * scale.max(1.0);
    (0..base.len())
        .filter(|&j| manifold.dist_unchecked(base.point(j).coords(), out.point(j).coords()) > threshold)
        .collect()
}

fn map_atoms<T, F>(n: usize, parallel: bool, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Send + Sync,
{
    if parallel {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

/// Recovers `(φ, ρ)` from a black-box isometry.
///
/// Fails with [`Error::NonRigid`] when the oracle is not of the form
/// `f ↦ ρ(φ)(f ∘ φ)` within the decomposition tolerances.
pub fn decompose<O: IsometryOracle + ?Sized>(oracle: &O, options: &DecomposeOptions) -> Result<Decomposition> {
    if options.parallel && !oracle.is_reentrant() {
        return Err(Error::NotReentrant);
    }
    let space = oracle.space().clone();
    let manifold = oracle.manifold().clone();
    manifold.validate()?;
    let n = space.len();
    let parallel = options.parallel;

    let (p, p_prime) = match &options.basepoints {
        Some((p, q)) => {
            manifold.check_point(p)?;
            manifold.check_point(q)?;
            if manifold.dist(p, q)? == 0.0 {
                return Err(Error::DegenerateProbe);
            }
            (p.clone(), q.clone())
        }
        None => {
            let mut rng = stream_rng(options.seed, 0);
            let p = manifold.base_point();
            let q = default_partner(&manifold, &p, &mut rng);
            (p, q)
        }
    };

    // (a) the permutation, from single-atom probes
    let base = call_checked(oracle, &L2Function::constant(space.clone(), manifold.clone(), p.clone())?)?;
    let images = map_atoms(n, parallel, |i| {
        let mut rng = stream_rng(options.seed, 1 + i as u64);
        let mut q = p_prime.clone();
        for attempt in 0..=3 {
            if attempt > 0 {
                q = default_partner(&manifold, &p, &mut rng);
            }
            let probe = base_function(&space, &manifold, &p)?.with_point(i, q.clone())?;
            let out = call_checked(oracle, &probe)?;
            let diff = difference_set(&manifold, &base, &out, manifold.dist_unchecked(p.coords(), q.coords()));
            match diff.as_slice() {
                [] => continue,
                [j] => return Ok(*j),
                many => {
                    return Err(Error::NonRigid(format!(
                        "probe at atom {i} moved {} atoms",
                        many.len()
                    )))
                }
            }
        }
        Err(Error::NonRigid(format!("probe at atom {i} moved no atom")))
    })?;
    let mut perm = vec![usize::MAX; n];
    for (i, &j) in images.iter().enumerate() {
        if perm[j] != usize::MAX {
            return Err(Error::NonRigid(format!("atom {j} answers probes at {} and {i}", perm[j])));
        }
        if (space.weight(i) - space.weight(j)).abs() > tol::WEIGHT_MATCH {
            return Err(Error::NonRigid(format!("atoms {j} and {i} carry different weights")));
        }
        perm[j] = i;
    }
    let phi = Automorphism::new(&space, perm).map_err(|e| Error::NonRigid(e.to_string()))?;
    let phi_inv = phi.inverse();

    // (b) ρ(i)(x) = γ(const x)(φ⁻¹(i))
    let mut rng = stream_rng(options.seed, u64::MAX);
    let fit_count = manifold.ambient_dim() + 3;
    let xs: Vec<Point> = (0..fit_count + options.validation_points)
        .map(|_| manifold.sample_point(&mut rng))
        .collect();
    let outs = map_atoms(xs.len(), parallel, |k| {
        call_checked(oracle, &L2Function::constant(space.clone(), manifold.clone(), xs[k].clone())?)
    })?;
    let fits = map_atoms(n, parallel, |i| {
        let src = phi_inv.image(i);
        let samples: Vec<(Point, Point)> = xs.iter().zip(&outs).map(|(x, o)| (x.clone(), o.point(src).clone())).collect();
        let g = manifold
            .fit_isometry(&samples[..fit_count])
            .map_err(|e| Error::NonRigid(format!("atom {i}: {e}")))?;
        let residual = samples.iter().try_fold(0.0f64, |m, (x, y)| {
            let gx = manifold.apply_isometry_unchecked(&g, x)?;
            Ok::<_, Error>(m.max(manifold.dist_unchecked(gx.coords(), y.coords())))
        })?;
        if !(residual <= tol::DECOMPOSE_RESIDUAL) {
            return Err(Error::NonRigid(format!("atom {i}: isometry fit residual {residual:e}")));
        }
        Ok((g, residual))
    })?;
    let (rho, fit_residuals): (Vec<_>, Vec<_>) = fits.into_iter().unzip();
    let isometry = L2Isometry::new(space.clone(), manifold.clone(), phi, rho)?;

    // (c) held-out functions
    let residuals = map_atoms(options.holdout, parallel, |k| {
        let mut rng = stream_rng(options.seed, (1u64 << 40) + k as u64);
        let f = L2Function::random(space.clone(), manifold.clone(), &mut rng);
        d_l2(&isometry.apply(&f)?, &call_checked(oracle, &f)?)
    })?;
    let holdout_residual = residuals.into_iter().fold(0.0f64, f64::max);
    if !(holdout_residual <= tol::DECOMPOSE_RESIDUAL) {
        return Err(Error::NonRigid(format!("held-out residual {holdout_residual:e}")));
    }
    Ok(Decomposition {
        isometry,
        fit_residuals,
        holdout_residual,
    })
}

fn base_function(space: &Arc<ProbSpace>, manifold: &Arc<ManifoldSpec>, p: &Point) -> Result<L2Function> {
    L2Function::constant(space.clone(), manifold.clone(), p.clone())
}

/// Largest atom count accepted by the exhaustive witness search.
pub const LOCALIZATION_MAX_ATOMS: usize = 20;

/// Per-probe summary of a failed witness search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    /// `Σ_{i∈A} p_i d²(f_i, g_i)`
    pub left: f64,
    /// Range of `Σ_{j∈B} p_j d²(γf_j, γg_j)` over equal-mass `B`.
    pub min_right: Option<f64>,
    pub max_right: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Localization {
    Witness(Vec<usize>),
    Failure {
        /// Number of subsets with the mass of `A`.
        equal_mass_subsets: usize,
        probes: Vec<ProbeSummary>,
    },
}

/// Searches for the unique `B` with `μ(B) = μ(A)` that carries the distance
/// mass of `A` for every probe pair.
pub fn localization_check<O: IsometryOracle + ?Sized>(
    oracle: &O,
    set: &[usize],
    probes: &[(L2Function, L2Function)],
) -> Result<Localization> {
    let space = oracle.space();
    let n = space.len();
    if n > LOCALIZATION_MAX_ATOMS {
        return Err(Error::TooLarge {
            n,
            limit: LOCALIZATION_MAX_ATOMS,
        });
    }
    let mut in_a = vec![false; n];
    for &i in set {
        if i >= n {
            return Err(Error::LengthMismatch { expected: n, got: i + 1 });
        }
        in_a[i] = true;
    }
    if !in_a.iter().any(|&b| b) {
        return Err(Error::EmptyOrFullSubset);
    }
    if probes.len() < 2 * n {
        return Err(Error::InsufficientProbes {
            needed: 2 * n,
            got: probes.len(),
        });
    }
    let a: Vec<usize> = (0..n).filter(|&i| in_a[i]).collect();
    let target_mass = space.mass(&a);

    // per probe: left value and per-atom weighted output distances
    let mut lefts = Vec::with_capacity(probes.len());
    let mut rights = Vec::with_capacity(probes.len());
    for (f, g) in probes {
        f.same_domain(g)?;
        if **f.space() != **space || **f.manifold() != **oracle.manifold() {
            return Err(Error::SpaceMismatch);
        }
        let before = f.pointwise_dist_sq(g)?;
        lefts.push(compensated_sum(a.iter().map(|&i| space.weight(i) * before[i])));
        let after = call_checked(oracle, f)?.pointwise_dist_sq(&call_checked(oracle, g)?)?;
        rights.push((0..n).map(|j| space.weight(j) * after[j]).collect::<Vec<f64>>());
    }

    let mut witnesses = Vec::new();
    let mut equal_mass = 0usize;
    let mut range: Vec<(f64, f64)> = vec![(f64::INFINITY, f64::NEG_INFINITY); probes.len()];
    for mask in 1u32..(1u32 << n) {
        let b: Vec<usize> = (0..n).filter(|&j| mask & (1 << j) != 0).collect();
        if (space.mass(&b) - target_mass).abs() > tol::LOCALIZATION_MASS {
            continue;
        }
        equal_mass += 1;
        let mut ok = true;
        for (k, right) in rights.iter().enumerate() {
            let r = compensated_sum(b.iter().map(|&j| right[j]));
            range[k] = (range[k].0.min(r), range[k].1.max(r));
            if (r - lefts[k]).abs() > tol::LOCALIZATION_VALUE * lefts[k].max(1.0) {
                ok = false;
            }
        }
        if ok {
            witnesses.push(b);
        }
    }
    match witnesses.len() {
        0 => Ok(Localization::Failure {
            equal_mass_subsets: equal_mass,
            probes: lefts
                .iter()
                .zip(&range)
                .map(|(&left, &(lo, hi))| ProbeSummary {
                    left,
                    min_right: (equal_mass > 0).then_some(lo),
                    max_right: (equal_mass > 0).then_some(hi),
                })
                .collect(),
        }),
        1 => Ok(Localization::Witness(witnesses.pop().unwrap())),
        count => Err(Error::AmbiguousWitness { count }),
    }
}

/// Seeded random probe pairs for [`localization_check`].
pub fn random_probes<R: Rng + ?Sized>(
    space: &Arc<ProbSpace>,
    manifold: &Arc<ManifoldSpec>,
    count: usize,
    rng: &mut R,
) -> Vec<(L2Function, L2Function)> {
    (0..count)
        .map(|_| {
            (
                L2Function::random(space.clone(), manifold.clone(), rng),
                L2Function::random(space.clone(), manifold.clone(), rng),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(n: usize) -> Arc<ProbSpace> {
        Arc::new(ProbSpace::uniform_interval(n))
    }

    fn s2() -> Arc<ManifoldSpec> {
        Arc::new(ManifoldSpec::sphere(2))
    }

    fn h2() -> Arc<ManifoldSpec> {
        Arc::new(ManifoldSpec::hyperbolic(2))
    }

    fn mixed_space() -> Arc<ProbSpace> {
        Arc::new(ProbSpace::new(vec![0.1, 0.1, 0.1, 0.2, 0.2, 0.3]).unwrap())
    }

    fn max_gap(a: &L2Function, b: &L2Function) -> f64 {
        d_l2(a, b).unwrap()
    }

    #[test]
    fn apply_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (sp, m) = (uniform(4), s2());
        let f = L2Function::random(sp.clone(), m.clone(), &mut rng);
        assert_eq!(L2Isometry::identity(sp.clone(), m.clone()).apply(&f).unwrap(), f);

        let swap = Automorphism::new(&sp, vec![1, 0, 2, 3]).unwrap();
        let g = L2Isometry::from_automorphism(sp.clone(), m.clone(), swap).unwrap();
        let out = g.apply(&f).unwrap();
        assert_eq!(out.point(0), f.point(1));
        assert_eq!(out.point(1), f.point(0));
        assert_eq!(out.point(2), f.point(2));

        let r = m.random_isometry(3);
        let g = L2Isometry::pointwise(sp.clone(), m.clone(), vec![r.clone(); 4]).unwrap();
        let out = g.apply(&f).unwrap();
        for i in 0..4 {
            assert!(m.dist(out.point(i), &m.apply_isometry(&r, f.point(i)).unwrap()).unwrap() < 1e-15);
        }
        let other = L2Function::random(uniform(3), m, &mut rng);
        assert_eq!(g.apply(&other), Err(Error::SpaceMismatch));
    }

    #[test]
    fn compose_and_inverse_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (sp, m) in [(mixed_space(), s2()), (uniform(5), h2())] {
            let g = L2Isometry::random(sp.clone(), m.clone(), &mut rng);
            let h = L2Isometry::random(sp.clone(), m.clone(), &mut rng);
            let gh = g.compose(&h).unwrap();
            let round = g.compose(&g.inverse()).unwrap();
            for _ in 0..50 {
                let f = L2Function::random(sp.clone(), m.clone(), &mut rng);
                assert!(max_gap(&round.apply(&f).unwrap(), &f) < 1e-9);
                let twice = g.apply(&h.apply(&f).unwrap()).unwrap();
                assert!(max_gap(&gh.apply(&f).unwrap(), &twice) < 1e-10);
                assert!(max_gap(&g.inverse().apply(&g.apply(&f).unwrap()).unwrap(), &f) < 1e-9);
            }
        }
        let sp = uniform(3);
        let a = Automorphism::new(&sp, vec![1, 2, 0]).unwrap();
        let b = Automorphism::new(&sp, vec![0, 2, 1]).unwrap();
        let ga = L2Isometry::from_automorphism(sp.clone(), s2(), a.clone()).unwrap();
        let gb = L2Isometry::from_automorphism(sp.clone(), s2(), b.clone()).unwrap();
        assert_eq!(ga.compose(&gb).unwrap().phi(), &b.compose(&a).unwrap());
    }

    #[test]
    fn conjugate_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (sp, m) = (mixed_space(), s2());
        let g = L2Isometry::random(sp.clone(), m.clone(), &mut rng);
        let ids = vec![m.identity_isometry(); 6];
        assert!(g.conjugate_pointwise(&ids).unwrap().iter().all(|s| s.is_identity(1e-12)));

        let tau: Vec<_> = (0..6).map(|_| m.sample_isometry(&mut rng)).collect();
        let pure = L2Isometry::from_automorphism(sp.clone(), m.clone(), g.phi().clone()).unwrap();
        let sigma = pure.conjugate_pointwise(&tau).unwrap();
        for i in 0..6 {
            assert!(sigma[i].max_abs_diff(&tau[g.phi().image(i)]).unwrap() < 1e-12);
        }

        let sigma = g.conjugate_pointwise(&tau).unwrap();
        let gs = L2Isometry::pointwise(sp.clone(), m.clone(), sigma).unwrap();
        let gt = L2Isometry::pointwise(sp.clone(), m.clone(), tau).unwrap();
        let triple = g.compose(&gt).unwrap().compose(&g.inverse()).unwrap();
        for _ in 0..50 {
            let f = L2Function::random(sp.clone(), m.clone(), &mut rng);
            assert!(max_gap(&gs.apply(&f).unwrap(), &triple.apply(&f).unwrap()) < 1e-9);
        }
        assert!(matches!(g.conjugate_pointwise(&[]), Err(Error::ArityMismatch { .. })));
    }

    #[test]
    fn record_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (sp, m) = (mixed_space(), h2());
        let g = L2Isometry::random(sp.clone(), m.clone(), &mut rng);
        let json = serde_json::to_string(&g).unwrap();
        assert!(json.starts_with(r#"{"phi":["#));
        let rec: IsometryRecord = serde_json::from_str(&json).unwrap();
        let back = L2Isometry::from_record(sp.clone(), m, rec).unwrap();
        assert!(back.max_abs_diff(&g).unwrap() < 1e-15);
        let bad = IsometryRecord {
            phi: vec![3, 1, 2, 0, 4, 5],
            rho: g.rho().to_vec(),
        };
        assert_eq!(
            L2Isometry::from_record(sp, h2(), bad),
            Err(Error::NotMeasurePreserving)
        );
    }

    #[test]
    fn decompose_recovers_generators() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (sp, m) in [(mixed_space(), s2()), (uniform(7), h2()), (uniform(3), Arc::new(ManifoldSpec::euclidean(2)))] {
            let g = L2Isometry::random(sp.clone(), m.clone(), &mut rng);
            assert!(validate_isometry(&g, 10, 1).unwrap().passed);
            let rec = decompose(&g, &DecomposeOptions::default()).unwrap();
            assert_eq!(rec.isometry.phi(), g.phi());
            assert!(rec.isometry.max_abs_diff(&g).unwrap() < 1e-9);
            assert!(rec.holdout_residual < 1e-8);
        }
    }

    #[test]
    fn decompose_trivial_intersection() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (sp, m) = (mixed_space(), s2());
        let id = decompose(&L2Isometry::identity(sp.clone(), m.clone()), &DecomposeOptions::default()).unwrap();
        assert!(id.isometry.phi().is_identity());
        assert!(id.isometry.rho().iter().all(|r| r.is_identity(1e-9)));

        let pure = L2Isometry::from_automorphism(sp.clone(), m.clone(), Automorphism::random(&sp, &mut rng)).unwrap();
        let rec = decompose(&pure, &DecomposeOptions::default()).unwrap();
        assert!(rec.isometry.rho().iter().all(|r| r.is_identity(1e-9)));

        let rho = (0..6).map(|_| m.sample_isometry(&mut rng)).collect();
        let pw = L2Isometry::pointwise(sp, m, rho).unwrap();
        assert!(decompose(&pw, &DecomposeOptions::default()).unwrap().isometry.phi().is_identity());
    }

    #[test]
    fn decompose_parallel_matches_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = L2Isometry::random(uniform(8), s2(), &mut rng);
        let seq = decompose(&g, &DecomposeOptions::default()).unwrap();
        let par = decompose(
            &g,
            &DecomposeOptions {
                parallel: true,
                ..DecomposeOptions::default()
            },
        )
        .unwrap();
        assert_eq!(seq, par);

        let g2 = g.clone();
        let opaque = FnOracle::new(g.space().clone(), g.manifold().clone(), false, move |f| g2.apply(f));
        assert!(decompose(&opaque, &DecomposeOptions::default()).is_ok());
        let err = decompose(
            &opaque,
            &DecomposeOptions {
                parallel: true,
                ..DecomposeOptions::default()
            },
        );
        assert_eq!(err.unwrap_err(), Error::NotReentrant);
    }

    #[test]
    fn decompose_rejects_spreading_oracle() {
        // averages the first two atoms' coordinates into both: not an isometry of any kind
        let (sp, m) = (uniform(4), Arc::new(ManifoldSpec::euclidean(1)));
        let oracle = FnOracle::new(sp.clone(), m.clone(), true, |f| {
            let s = (f.point(0).coords()[0] + f.point(1).coords()[0]) / std::f64::consts::SQRT_2;
            let d = (f.point(0).coords()[0] - f.point(1).coords()[0]) / std::f64::consts::SQRT_2;
            let mut pts = f.points().to_vec();
            pts[0] = Point::new(vec![s]);
            pts[1] = Point::new(vec![d]);
            L2Function::new(f.space().clone(), f.manifold().clone(), pts)
        });
        assert!(validate_isometry(&oracle, 20, 0).unwrap().passed);
        assert!(matches!(decompose(&oracle, &DecomposeOptions::default()), Err(Error::NonRigid(_))));
    }

    #[test]
    fn localization_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (sp, m) = (mixed_space(), s2());
        let g = L2Isometry::random(sp.clone(), m.clone(), &mut rng);
        let probes = random_probes(&sp, &m, 12, &mut rng);
        for a in [vec![0], vec![1, 3], vec![2, 4, 5]] {
            let mut expect: Vec<usize> = a.iter().map(|&i| g.phi().inverse().image(i)).collect();
            expect.sort();
            assert_eq!(localization_check(&g, &a, &probes).unwrap(), Localization::Witness(expect));
        }
        let all: Vec<usize> = (0..6).collect();
        assert_eq!(localization_check(&g, &all, &probes).unwrap(), Localization::Witness(all));
        assert_eq!(
            localization_check(&g, &[0], &probes[..11]),
            Err(Error::InsufficientProbes { needed: 12, got: 11 })
        );
        assert_eq!(localization_check(&g, &[], &probes), Err(Error::EmptyOrFullSubset));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn group_laws_hold_behaviourally(seed in any::<u64>(), n in 1usize..8, hyper in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (sp, m) = (uniform(n), if hyper { h2() } else { s2() });
            let a = L2Isometry::random(sp.clone(), m.clone(), &mut rng);
            let b = L2Isometry::random(sp.clone(), m.clone(), &mut rng);
            let c = L2Isometry::random(sp.clone(), m.clone(), &mut rng);
            let left = a.compose(&b).unwrap().compose(&c).unwrap();
            let right = a.compose(&b.compose(&c).unwrap()).unwrap();
            prop_assert_eq!(left.phi(), right.phi());
            prop_assert!(left.max_abs_diff(&right).unwrap() < 1e-9);
            let e = L2Isometry::identity(sp.clone(), m.clone());
            prop_assert!(a.compose(&e).unwrap().max_abs_diff(&a).unwrap() < 1e-12);
            prop_assert!(a.inverse().compose(&a).unwrap().max_abs_diff(&e).unwrap() < 1e-9);
            let f = L2Function::random(sp.clone(), m.clone(), &mut rng);
            let h = L2Function::random(sp, m, &mut rng);
            let before = d_l2(&f, &h).unwrap();
            let after = d_l2(&a.apply(&f).unwrap(), &a.apply(&h).unwrap()).unwrap();
            prop_assert!((before - after).abs() < 1e-9);
        }
    }
}
