//! Explicit isometries on grid models of `[0, 1]`: the interleaving
//! rescaling map, the product factorization, and two isometries that are not
//! of the semidirect form.

use std::f64::consts::{FRAC_PI_4, SQRT_2};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::isometry_group::IsometryOracle;
use crate::l2::{product_glue, product_split, L2Function};
use crate::manifold::{ManifoldSpec, Point};
use crate::measure::{compensated_sum, Automorphism, ProbSpace};

/// An [`L2Function`] over a uniform grid `uniform_interval(m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction(L2Function);

impl GridFunction {
    pub fn new(f: L2Function) -> Result<Self> {
        if !f.space().is_uniform_grid() {
            return Err(Error::NotAGrid);
        }
        Ok(GridFunction(f))
    }

    pub fn inner(&self) -> &L2Function {
        &self.0
    }

    pub fn into_inner(self) -> L2Function {
        self.0
    }

    pub fn grid_size(&self) -> usize {
        self.0.len()
    }
}

fn check_divisible(value: usize, divisor: usize) -> Result<()> {
    if divisor == 0 || !value.is_multiple_of(divisor) {
        return Err(Error::DivisibilityError { value, divisor });
    }
    Ok(())
}

/// The common factor of a product of `k` equal factors.
fn equal_factor(manifold: &ManifoldSpec, k: usize) -> Result<&ManifoldSpec> {
    let ManifoldSpec::Product(fs) = manifold else {
        return Err(Error::NotAProduct(format!("{manifold:?}")));
    };
    if fs.len() != k {
        return Err(Error::ArityMismatch {
            expected: k,
            got: fs.len(),
        });
    }
    if fs.iter().any(|f| f != &fs[0]) {
        return Err(Error::NotAProduct("factors are not all equal".into()));
    }
    Ok(&fs[0])
}

/// `L²(grid n, X^k) → L²(grid k·n, √k X)`: output atom `i·n + j` carries
/// factor `i` of input atom `j`.
pub fn interleave(f: &GridFunction, k: usize) -> Result<GridFunction> {
    let f = &f.0;
    let x = equal_factor(f.manifold(), k)?;
    let n = f.len();
    let mut out = vec![Point::new(Vec::new()); k * n];
    for j in 0..n {
        for (i, part) in f.manifold().split_point(f.point(j))?.into_iter().enumerate() {
            out[i * n + j] = part;
        }
    }
    let space = Arc::new(ProbSpace::uniform_interval(k * n));
    let target = Arc::new(ManifoldSpec::scaled((k as f64).sqrt(), x.clone()));
    GridFunction::new(L2Function::from_parts(space, target, out))
}

/// Inverse of [`interleave`]; the grid size must be divisible by `k`.
pub fn deinterleave(g: &GridFunction, k: usize) -> Result<GridFunction> {
    let g = &g.0;
    let m = g.len();
    check_divisible(m, k)?;
    let ManifoldSpec::Scaled { c, of } = g.manifold().as_ref() else {
        return Err(Error::VariantMismatch(format!("expected a scaled target, got {:?}", g.manifold())));
    };
    if (c * c - k as f64).abs() > 1e-12 {
        return Err(Error::VariantMismatch(format!("scale {c} is not √{k}")));
    }
    let n = m / k;
    let target = Arc::new(ManifoldSpec::product(vec![of.as_ref().clone(); k]));
    let points = (0..n)
        .map(|j| {
            let parts: Vec<Point> = (0..k).map(|i| g.point(i * n + j).clone()).collect();
            target.join_point(&parts)
        })
        .collect::<Result<Vec<_>>>()?;
    GridFunction::new(L2Function::from_parts(Arc::new(ProbSpace::uniform_interval(n)), target, points))
}

/// Swaps the two middle quarters of `uniform_interval(m)`, fixing the outer ones.
pub fn quarter_swap(m: usize) -> Result<Automorphism> {
    check_divisible(m, 4)?;
    let q = m / 4;
    let perm = (0..m)
        .map(|i| match i {
            _ if (q..2 * q).contains(&i) => i + q,
            _ if (2 * q..3 * q).contains(&i) => i - q,
            _ => i,
        })
        .collect();
    Automorphism::new(&ProbSpace::uniform_interval(m), perm)
}

/// `(f₁, f₂)` for a two-factor product target.
pub fn product_factorize(f: &L2Function) -> Result<(L2Function, L2Function)> {
    product_split(f)
}

/// Inverse of [`product_factorize`].
pub fn product_unfactorize(f1: &L2Function, f2: &L2Function) -> Result<L2Function> {
    product_glue(f1, f2)
}

/// A linear isometry of `L²(grid m, ℝ)` rotating `e = √2 χ_{[0,1/2)}` onto
/// `e′ = χ_{[0,1]}` and fixing the orthogonal complement of their span.
#[derive(Debug, Clone, PartialEq)]
pub struct HilbertRotation {
    space: Arc<ProbSpace>,
    manifold: Arc<ManifoldSpec>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    angle: f64,
}

/// Constructs the non-rigid isometry on an even grid.
pub fn hilbert_nonrigid(m: usize) -> Result<HilbertRotation> {
    check_divisible(m, 2)?;
    let space = Arc::new(ProbSpace::uniform_interval(m));
    let e = hilbert_e_coords(m);
    let ep = vec![1.0; m];
    let proj = weighted_dot(&space, &ep, &e);
    let mut u2: Vec<f64> = ep.iter().zip(&e).map(|(a, b)| a - proj * b).collect();
    let norm = weighted_dot(&space, &u2, &u2).sqrt();
    u2.iter_mut().for_each(|x| *x /= norm);
    // the angle between e and e′ is π/4: ⟨e, e′⟩ = 1/√2
    Ok(HilbertRotation {
        space,
        manifold: Arc::new(ManifoldSpec::euclidean(1)),
        u1: e,
        u2,
        angle: FRAC_PI_4,
    })
}

fn hilbert_e_coords(m: usize) -> Vec<f64> {
    (0..m).map(|i| if i < m / 2 { SQRT_2 } else { 0.0 }).collect()
}

fn weighted_dot(space: &ProbSpace, a: &[f64], b: &[f64]) -> f64 {
    compensated_sum(a.iter().zip(b).zip(space.weights()).map(|((x, y), p)| p * x * y))
}

fn scalar_function(space: &Arc<ProbSpace>, manifold: &Arc<ManifoldSpec>, values: Vec<f64>) -> L2Function {
    L2Function::from_parts(
        space.clone(),
        manifold.clone(),
        values.into_iter().map(|v| Point::new(vec![v])).collect(),
    )
}

impl HilbertRotation {
    /// `e = √2 χ_{first half}`
    pub fn e(&self) -> L2Function {
        scalar_function(&self.space, &self.manifold, hilbert_e_coords(self.space.len()))
    }

    /// `e′ = χ_{all}`
    pub fn e_prime(&self) -> L2Function {
        scalar_function(&self.space, &self.manifold, vec![1.0; self.space.len()])
    }

    pub fn zero(&self) -> L2Function {
        scalar_function(&self.space, &self.manifold, vec![0.0; self.space.len()])
    }

    /// `T v = v + (cos θ − 1)(a u₁ + b u₂) + sin θ (a u₂ − b u₁)`
    pub fn apply_coords(&self, v: &[f64]) -> Vec<f64> {
        let a = weighted_dot(&self.space, v, &self.u1);
        let b = weighted_dot(&self.space, v, &self.u2);
        let (s, c) = self.angle.sin_cos();
        v.iter()
            .zip(self.u1.iter().zip(&self.u2))
            .map(|(x, (p, q))| x + (c - 1.0) * (a * p + b * q) + s * (a * q - b * p))
            .collect()
    }
}

impl IsometryOracle for HilbertRotation {
    fn space(&self) -> &Arc<ProbSpace> {
        &self.space
    }

    fn manifold(&self) -> &Arc<ManifoldSpec> {
        &self.manifold
    }

    fn call(&self, f: &L2Function) -> Result<L2Function> {
        if **f.space() != *self.space || **f.manifold() != *self.manifold {
            return Err(Error::SpaceMismatch);
        }
        let v: Vec<f64> = f.points().iter().map(|p| p.coords()[0]).collect();
        Ok(scalar_function(&self.space, &self.manifold, self.apply_coords(&v)))
    }

    fn is_reentrant(&self) -> bool {
        true
    }
}

/// `γ⁻¹ ∘ γ^φ ∘ γ` on `L²(grid m/2, M × M)`, where `γ` interleaves onto
/// the grid of size `m` and `φ` is the quarter swap.
#[derive(Debug, Clone, PartialEq)]
pub struct R1Oracle {
    space: Arc<ProbSpace>,
    manifold: Arc<ManifoldSpec>,
    phi: Automorphism,
}

/// The non-rigid isometry of a reducible target; `4 | m`.
pub fn r1_nonrigid(factor: &ManifoldSpec, m: usize) -> Result<R1Oracle> {
    r1_with(factor, m, quarter_swap(m)?)
}

/// The same composite with `φ = id`, which collapses to the identity.
pub fn r1_untwisted(factor: &ManifoldSpec, m: usize) -> Result<R1Oracle> {
    check_divisible(m, 4)?;
    r1_with(factor, m, Automorphism::identity(m))
}

fn r1_with(factor: &ManifoldSpec, m: usize, phi: Automorphism) -> Result<R1Oracle> {
    check_divisible(m, 4)?;
    factor.validate()?;
    Ok(R1Oracle {
        space: Arc::new(ProbSpace::uniform_interval(m / 2)),
        manifold: Arc::new(ManifoldSpec::product(vec![factor.clone(), factor.clone()])),
        phi,
    })
}

impl R1Oracle {
    /// Grid size of the interleaved middle space.
    pub fn m(&self) -> usize {
        self.phi.len()
    }
}

impl IsometryOracle for R1Oracle {
    fn space(&self) -> &Arc<ProbSpace> {
        &self.space
    }

    fn manifold(&self) -> &Arc<ManifoldSpec> {
        &self.manifold
    }

    fn call(&self, f: &L2Function) -> Result<L2Function> {
        if **f.space() != *self.space || **f.manifold() != *self.manifold {
            return Err(Error::SpaceMismatch);
        }
        let g = interleave(&GridFunction::new(f.clone())?, 2)?.into_inner();
        let points = (0..g.len()).map(|i| g.point(self.phi.image(i)).clone()).collect();
        let swapped = L2Function::from_parts(g.space().clone(), g.manifold().clone(), points);
        let back = deinterleave(&GridFunction::new(swapped)?, 2)?.into_inner();
        Ok(L2Function::from_parts(self.space.clone(), self.manifold.clone(), back.points().to_vec()))
    }

    fn is_reentrant(&self) -> bool {
        true
    }
}
