//! Finite probability spaces, their automorphisms, finite partitions and
//! densities.
//!
//! The atomless part of a standard probability space is modelled by uniform
//! grids: atom `i` of [`ProbSpace::uniform_interval`]`(m)` stands for the
//! subinterval `[i/m, (i+1)/m)`. Automorphisms are then exactly the
//! weight-preserving permutations of the atoms.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tol;

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// A finite probability space: positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProbSpaceRepr", into = "ProbSpaceRepr")]
pub struct ProbSpace {
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProbSpaceRepr {
    weights: Vec<f64>,
}

impl TryFrom<ProbSpaceRepr> for ProbSpace {
    type Error = Error;
    fn try_from(r: ProbSpaceRepr) -> Result<Self> {
        ProbSpace::new(r.weights)
    }
}

impl From<ProbSpace> for ProbSpaceRepr {
    fn from(s: ProbSpace) -> Self {
        ProbSpaceRepr { weights: s.weights }
    }
}

impl ProbSpace {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptySpace);
        }
        if let Some((index, &weight)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(**w > 0.0) || !w.is_finite())
        {
            return Err(Error::NonPositiveWeight { index, weight });
        }
        let sum = compensated_sum(weights.iter().copied());
        if (sum - 1.0).abs() > tol::NORMALIZATION {
            return Err(Error::NotNormalized { sum });
        }
        Ok(ProbSpace { weights })
    }

    /// Uniform grid model of `([0,1], λ)` with `m` cells.
    pub fn uniform_interval(m: usize) -> Self {
        assert!(m >= 1, "grid needs at least one cell");
        ProbSpace {
            weights: vec![1.0 / m as f64; m],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }

    /// μ(A) for a set of atom indices.
    pub fn mass(&self, set: &[usize]) -> f64 {
        compensated_sum(set.iter().map(|&i| self.weights[i]))
    }

    /// True if every atom carries weight `1/n`.
    pub fn is_uniform_grid(&self) -> bool {
        let w = 1.0 / self.len() as f64;
        self.weights.iter().all(|&p| (p - w).abs() <= 1e-15)
    }

    /// Atoms grouped by (tolerance-equal) weight, in order of first appearance.
    pub fn weight_classes(&self) -> Vec<Vec<usize>> {
        let mut classes: Vec<(f64, Vec<usize>)> = Vec::new();
        for (i, &p) in self.weights.iter().enumerate() {
            match classes
                .iter_mut()
                .find(|(w, _)| (w - p).abs() <= tol::WEIGHT_MATCH)
            {
                Some((_, members)) => members.push(i),
                None => classes.push((p, vec![i])),
            }
        }
        classes.into_iter().map(|(_, m)| m).collect()
    }

    /// Order of Aut(Ω): the product of factorials of the weight-class sizes,
    /// or `None` on overflow.
    pub fn automorphism_count(&self) -> Option<u128> {
        self.weight_classes().iter().try_fold(1u128, |acc, c| {
            (1..=c.len() as u128).try_fold(acc, |a, k| a.checked_mul(k))
        })
    }
}

/// True iff `perm` is a bijection with `p[perm[i]] == p[i]` for every atom.
pub fn check_automorphism(space: &ProbSpace, perm: &[usize]) -> Result<bool> {
    if perm.len() != space.len() {
        return Err(Error::LengthMismatch {
            expected: space.len(),
            got: perm.len(),
        });
    }
    if !is_bijection(perm) {
        return Ok(false);
    }
    Ok(perm
        .iter()
        .enumerate()
        .all(|(i, &j)| (space.weight(j) - space.weight(i)).abs() <= tol::NORMALIZATION))
}

fn is_bijection(map: &[usize]) -> bool {
    let mut seen = vec![false; map.len()];
    for &j in map {
        if j >= map.len() || seen[j] {
            return false;
        }
        seen[j] = true;
    }
    true
}

fn invert_map(map: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; map.len()];
    for (i, &j) in map.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

/// A measure-preserving permutation of the atoms, stored as `perm[i] = φ(i)`.
///
/// It acts on functions by precomposition, `f ↦ f ∘ φ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Automorphism {
    perm: Vec<usize>,
}

impl Automorphism {
    pub fn new(space: &ProbSpace, perm: Vec<usize>) -> Result<Self> {
        if perm.len() != space.len() {
            return Err(Error::LengthMismatch {
                expected: space.len(),
                got: perm.len(),
            });
        }
        if !is_bijection(&perm) {
            return Err(Error::NotBijective);
        }
        if !check_automorphism(space, &perm)? {
            return Err(Error::NotMeasurePreserving);
        }
        Ok(Automorphism { perm })
    }

    pub fn identity(n: usize) -> Self {
        Automorphism {
            perm: (0..n).collect(),
        }
    }

    /// Uniformly random automorphism: an independent shuffle of every weight class.
    pub fn random<R: Rng + ?Sized>(space: &ProbSpace, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..space.len()).collect();
        for class in space.weight_classes() {
            let mut images = class.clone();
            images.shuffle(rng);
            for (&src, &dst) in class.iter().zip(&images) {
                perm[src] = dst;
            }
        }
        Automorphism { perm }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// φ(i)
    pub fn image(&self, i: usize) -> usize {
        self.perm[i]
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &j)| i == j)
    }

    /// The map `i ↦ self(other(i))`.
    pub fn compose(&self, other: &Automorphism) -> Result<Automorphism> {
        if self.len() != other.len() {
            return Err(Error::SpaceMismatch);
        }
        Ok(Automorphism {
            perm: other.perm.iter().map(|&j| self.perm[j]).collect(),
        })
    }

    pub fn inverse(&self) -> Automorphism {
        Automorphism {
            perm: invert_map(&self.perm),
        }
    }
}

/// Radon–Nikodym derivative of the pushforward `φ_*μ` with respect to `μ`:
/// `values[j] = p_{φ⁻¹(j)} / p_j`.
pub fn pushforward_density(space: &ProbSpace, map: &[usize]) -> Result<DensityFn> {
    if map.len() != space.len() {
        return Err(Error::LengthMismatch {
            expected: space.len(),
            got: map.len(),
        });
    }
    if !is_bijection(map) {
        return Err(Error::NotBijective);
    }
    let inv = invert_map(map);
    let values = (0..space.len())
        .map(|j| {
            let (src, dst) = (space.weight(inv[j]), space.weight(j));
            if src == dst {
                1.0
            } else {
                src / dst
            }
        })
        .collect();
    Ok(DensityFn { values })
}

/// A finite partition of the atoms into disjoint nonempty blocks.
///
/// Blocks are kept sorted internally and ordered by their smallest element,
/// so equal partitions compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n];
        let mut blocks = blocks;
        for block in &mut blocks {
            if block.is_empty() {
                return Err(Error::InvalidPartition("empty block".into()));
            }
            block.sort_unstable();
            for &i in block.iter() {
                if i >= n {
                    return Err(Error::InvalidPartition(format!("atom {i} out of range")));
                }
                if seen[i] {
                    return Err(Error::InvalidPartition(format!("atom {i} in two blocks")));
                }
                seen[i] = true;
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("atom {i} not covered")));
        }
        blocks.sort_by_key(|b| b[0]);
        Ok(Partition { n, blocks })
    }

    /// The one-block partition.
    pub fn trivial(n: usize) -> Self {
        Partition {
            n,
            blocks: vec![(0..n).collect()],
        }
    }

    /// The partition into singletons.
    pub fn discrete(n: usize) -> Self {
        Partition {
            n,
            blocks: (0..n).map(|i| vec![i]).collect(),
        }
    }

    /// `{A, Aᶜ}` (or just `{Ω}` if `A` is empty or full).
    pub fn two_block(n: usize, set: &[usize]) -> Result<Self> {
        let mut inside = vec![false; n];
        for &i in set {
            if i >= n {
                return Err(Error::InvalidPartition(format!("atom {i} out of range")));
            }
            inside[i] = true;
        }
        let a: Vec<usize> = (0..n).filter(|&i| inside[i]).collect();
        let b: Vec<usize> = (0..n).filter(|&i| !inside[i]).collect();
        Partition::new(n, [a, b].into_iter().filter(|x| !x.is_empty()).collect())
    }

    pub fn atom_count(&self) -> usize {
        self.n
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// Index of the block containing each atom.
    pub fn labels(&self) -> Vec<usize> {
        let mut labels = vec![0; self.n];
        for (b, block) in self.blocks.iter().enumerate() {
            for &i in block {
                labels[i] = b;
            }
        }
        labels
    }

    /// True if every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        if self.n != coarser.n {
            return false;
        }
        let labels = coarser.labels();
        self.blocks
            .iter()
            .all(|b| b.iter().all(|&i| labels[i] == labels[b[0]]))
    }
}

/// All nonempty intersections `A_i ∩ B_j`.
pub fn common_refinement(a: &Partition, b: &Partition) -> Result<Partition> {
    if a.n != b.n {
        return Err(Error::SpaceMismatch);
    }
    let (la, lb) = (a.labels(), b.labels());
    let mut cells: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for i in 0..a.n {
        cells.entry((la[i], lb[i])).or_default().push(i);
    }
    Partition::new(a.n, cells.into_values().collect())
}

/// A nonnegative density on the atoms; it induces `μ̃(A) = Σ_{i∈A} η_i p_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DensityFn {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for DensityFn {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        DensityFn::new(values)
    }
}

impl From<DensityFn> for Vec<f64> {
    fn from(d: DensityFn) -> Self {
        d.values
    }
}

impl DensityFn {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= 0.0) || !v.is_finite())
        {
            return Err(Error::NegativeDensity { index, value });
        }
        Ok(DensityFn { values })
    }

    pub fn constant(n: usize, value: f64) -> Result<Self> {
        DensityFn::new(vec![value; n])
    }

    pub fn indicator(n: usize, set: &[usize]) -> Result<Self> {
        let mut values = vec![0.0; n];
        for &i in set {
            if i >= n {
                return Err(Error::LengthMismatch { expected: n, got: i + 1 });
            }
            values[i] = 1.0;
        }
        Ok(DensityFn { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// `1 - η`, defined when η takes values in `[0, 1]`.
    pub fn complement(&self) -> Result<Self> {
        DensityFn::new(self.values.iter().map(|v| 1.0 - v).collect())
    }

    /// μ̃(A) = Σ_{i∈A} η_i p_i.
    pub fn measure(&self, space: &ProbSpace, set: &[usize]) -> Result<f64> {
        if self.len() != space.len() {
            return Err(Error::SpaceMismatch);
        }
        Ok(compensated_sum(
            set.iter().map(|&i| self.values[i] * space.weight(i)),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn make_prob_space_examples() {
        assert_eq!(ProbSpace::new(vec![1.0]).unwrap().len(), 1);
        assert_eq!(ProbSpace::new(vec![0.5, 0.5]).unwrap().len(), 2);
        assert!(matches!(
            ProbSpace::new(vec![0.5, 0.6]),
            Err(Error::NotNormalized { .. })
        ));
        assert!(matches!(
            ProbSpace::new(vec![1.5, -0.5]),
            Err(Error::NonPositiveWeight { index: 1, .. })
        ));
        assert!(matches!(ProbSpace::new(vec![]), Err(Error::EmptySpace)));
        assert!(matches!(
            ProbSpace::new(vec![0.5, f64::NAN]),
            Err(Error::NonPositiveWeight { index: 1, .. })
        ));
    }

    #[test]
    fn uniform_interval_weights() {
        assert_eq!(ProbSpace::uniform_interval(1).weights(), &[1.0]);
        assert_eq!(ProbSpace::uniform_interval(4).weights(), &[0.25; 4]);
        assert_eq!(ProbSpace::uniform_interval(3).total(), 1.0);
        for m in 1..200 {
            let s = ProbSpace::uniform_interval(m);
            assert!(ProbSpace::new(s.weights().to_vec()).is_ok(), "m = {m}");
            assert!(s.is_uniform_grid());
        }
    }

    #[test]
    fn automorphism_checks() {
        let s = ProbSpace::new(vec![0.5, 0.5]).unwrap();
        assert!(check_automorphism(&s, &[0, 1]).unwrap());
        assert!(check_automorphism(&s, &[1, 0]).unwrap());
        let t = ProbSpace::new(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert!(check_automorphism(&t, &[0, 1]).unwrap());
        assert!(!check_automorphism(&t, &[1, 0]).unwrap());
        assert!(!check_automorphism(&s, &[0, 0]).unwrap());
        assert!(matches!(
            check_automorphism(&s, &[0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert_eq!(
            Automorphism::new(&t, vec![1, 0]),
            Err(Error::NotMeasurePreserving)
        );
    }

    #[test]
    fn automorphisms_form_a_group() {
        let s = ProbSpace::new(vec![0.1, 0.2, 0.1, 0.2, 0.1, 0.3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let a = Automorphism::random(&s, &mut rng);
            let b = Automorphism::random(&s, &mut rng);
            assert!(check_automorphism(&s, a.perm()).unwrap());
            let ab = a.compose(&b).unwrap();
            assert!(check_automorphism(&s, ab.perm()).unwrap());
            assert!(check_automorphism(&s, a.inverse().perm()).unwrap());
            assert!(a.compose(&a.inverse()).unwrap().is_identity());
            for i in 0..s.len() {
                assert_eq!(ab.image(i), a.image(b.image(i)));
            }
        }
        assert_eq!(s.automorphism_count(), Some(6 * 2));
    }

    /// Brute-force pushforward measure of every subset.
    fn pushforward_mass(space: &ProbSpace, map: &[usize], set_mask: u32) -> f64 {
        (0..space.len())
            .filter(|&i| set_mask & (1 << map[i]) != 0)
            .map(|i| space.weight(i))
            .sum()
    }

    #[test]
    fn pushforward_density_swap_example() {
        let s = ProbSpace::new(vec![0.25, 0.25, 0.5]).unwrap();
        let map = [2, 1, 0];
        let eta = pushforward_density(&s, &map).unwrap();
        assert_eq!(eta.values(), &[2.0, 1.0, 0.5]);
        for mask in 0u32..8 {
            let set: Vec<usize> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
            let lhs = pushforward_mass(&s, &map, mask);
            assert!((eta.measure(&s, &set).unwrap() - lhs).abs() < 1e-15);
        }
    }

    #[test]
    fn pushforward_density_identity_and_errors() {
        let s = ProbSpace::new(vec![0.2, 0.3, 0.2, 0.3]).unwrap();
        assert_eq!(pushforward_density(&s, &[0, 1, 2, 3]).unwrap().values(), &[1.0; 4]);
        assert_eq!(pushforward_density(&s, &[2, 3, 0, 1]).unwrap().values(), &[1.0; 4]);
        assert_eq!(pushforward_density(&s, &[0, 0, 2, 3]), Err(Error::NotBijective));
    }

    #[test]
    fn refinement_examples() {
        let a = Partition::new(3, vec![vec![0, 1], vec![2]]).unwrap();
        let b = Partition::new(3, vec![vec![0], vec![1, 2]]).unwrap();
        assert_eq!(common_refinement(&a, &b).unwrap(), Partition::discrete(3));
        assert_eq!(common_refinement(&a, &a).unwrap(), a);
        assert_eq!(common_refinement(&Partition::trivial(3), &b).unwrap(), b);
        assert_eq!(
            common_refinement(&a, &Partition::trivial(4)),
            Err(Error::SpaceMismatch)
        );
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(3, vec![vec![0, 1]]).is_err());
        assert!(Partition::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(Partition::new(3, vec![vec![0, 1, 2], vec![]]).is_err());
        let p = Partition::new(3, vec![vec![2, 0], vec![1]]).unwrap();
        assert_eq!(p, Partition::new(3, vec![vec![1], vec![0, 2]]).unwrap());
    }

    #[test]
    fn serde_shapes() {
        let s: ProbSpace = serde_json::from_str(r#"{"weights":[0.25,0.75]}"#).unwrap();
        assert_eq!(s.weights(), &[0.25, 0.75]);
        assert!(serde_json::from_str::<ProbSpace>(r#"{"weights":[0.25,0.5]}"#).is_err());
        let a: Automorphism = serde_json::from_str(r#"{"perm":[1,0]}"#).unwrap();
        assert_eq!(a.perm(), &[1, 0]);
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"{"weights":[0.25,0.75]}"#);
    }
}
