//! Closed convex cones: Euclidean projection, Monte Carlo statistical
//! dimension and mean width, Moreau decomposition, and the cone/subspace
//! intersection test used by the kinematic experiments.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::{gen_spherical, Dictionary};
use crate::error::{invalid, Error, Result};
use crate::linalg::MeanEstimate;
use crate::nnls::nnls;
use crate::rng::{self, tag};

/// Tolerance on orthonormality and unit norms checked at construction.
const SHAPE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub enum ConeSpec {
    /// Span of the orthonormal columns of `basis` (`n x d`).
    Subspace { basis: DMatrix<f64> },
    /// `{t u : t >= 0}` for a unit vector `u`.
    Ray { direction: DVector<f64> },
    /// Nonnegative orthant of R^n.
    Orthant { n: usize },
    /// Conic hull of the unit columns of `gens` (`n x k`).
    Generators { gens: DMatrix<f64> },
}

impl ConeSpec {
    pub fn subspace(basis: DMatrix<f64>) -> Result<Self> {
        let d = basis.ncols();
        if basis.nrows() == 0 {
            return invalid("basis", "ambient dimension must be positive");
        }
        if d > basis.nrows() {
            return invalid("basis", "more basis vectors than ambient dimensions");
        }
        let gram = basis.transpose() * &basis;
        let err = (gram - DMatrix::identity(d, d)).amax();
        if err > SHAPE_TOL {
            return invalid("basis", format!("columns not orthonormal (error {err:e})"));
        }
        Ok(ConeSpec::Subspace { basis })
    }

    /// The coordinate subspace spanned by the first `d` standard basis vectors.
    pub fn coordinate_subspace(n: usize, d: usize) -> Result<Self> {
        if n == 0 || d > n {
            return invalid("d", format!("need 0 <= d <= n, got d = {d}, n = {n}"));
        }
        Ok(ConeSpec::Subspace {
            basis: DMatrix::identity(n, d),
        })
    }

    /// Uniformly random `d`-dimensional subspace of R^n.
    pub fn random_subspace<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Self> {
        if n == 0 || d > n {
            return invalid("d", format!("need 0 <= d <= n, got d = {d}, n = {n}"));
        }
        if d == 0 {
            return Ok(ConeSpec::Subspace {
                basis: DMatrix::zeros(n, 0),
            });
        }
        let basis = crate::linalg::orthonormal_columns(&crate::linalg::gaussian_matrix(n, d, rng));
        Ok(ConeSpec::Subspace {
            basis: basis.columns(0, d).into_owned(),
        })
    }

    /// Ray through `v`, normalized.
    pub fn ray(v: DVector<f64>) -> Result<Self> {
        let nrm = v.norm();
        if !(nrm > 0.0 && nrm.is_finite()) {
            return invalid("direction", "ray direction must be a nonzero finite vector");
        }
        Ok(ConeSpec::Ray { direction: v / nrm })
    }

    pub fn orthant(n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("n", "orthant needs n >= 1");
        }
        Ok(ConeSpec::Orthant { n })
    }

    /// Conic hull of the columns of `gens`, each normalized.
    pub fn generators(mut gens: DMatrix<f64>) -> Result<Self> {
        if gens.nrows() == 0 || gens.ncols() == 0 {
            return invalid("gens", "need at least one generator in positive dimension");
        }
        for (j, mut col) in gens.column_iter_mut().enumerate() {
            let nrm = col.norm();
            if !(nrm > 0.0 && nrm.is_finite()) {
                return Err(Error::InvalidArgument {
                    name: "gens",
                    reason: format!("generator {j} has norm {nrm}"),
                });
            }
            col /= nrm;
        }
        Ok(ConeSpec::Generators { gens })
    }

    /// Cone generated by the first `k` atoms of a dictionary.
    pub fn from_atoms(d: &Dictionary, k: usize) -> Result<Self> {
        if k == 0 || k > d.m() {
            return invalid("k", format!("need 1 <= k <= m = {}", d.m()));
        }
        let idx: Vec<usize> = (0..k).collect();
        Self::generators(d.submatrix(&idx))
    }

    /// `k` random unit generators in R^n.
    pub fn random_generators(n: usize, k: usize, seed: u64) -> Result<Self> {
        Self::from_atoms(&gen_spherical(n, k, seed)?, k)
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            ConeSpec::Subspace { basis } => basis.nrows(),
            ConeSpec::Ray { direction } => direction.len(),
            ConeSpec::Orthant { n } => *n,
            ConeSpec::Generators { gens } => gens.nrows(),
        }
    }

    /// Generators of a polyhedral cone; `None` for subspaces.
    pub fn generator_matrix(&self) -> Option<DMatrix<f64>> {
        match self {
            ConeSpec::Subspace { .. } => None,
            ConeSpec::Ray { direction } => Some(DMatrix::from_column_slice(
                direction.len(),
                1,
                direction.as_slice(),
            )),
            ConeSpec::Orthant { n } => Some(DMatrix::identity(*n, *n)),
            ConeSpec::Generators { gens } => Some(gens.clone()),
        }
    }

    /// The cone `Q C` for an orthogonal `q`.
    pub fn rotated(&self, q: &DMatrix<f64>) -> ConeSpec {
        match self {
            ConeSpec::Subspace { basis } => ConeSpec::Subspace { basis: q * basis },
            ConeSpec::Ray { direction } => ConeSpec::Ray {
                direction: q * direction,
            },
            ConeSpec::Orthant { .. } | ConeSpec::Generators { .. } => ConeSpec::Generators {
                gens: q * self.generator_matrix().unwrap(),
            },
        }
    }

    pub fn label(&self) -> String {
        match self {
            ConeSpec::Subspace { basis } => format!("subspace:{}", basis.ncols()),
            ConeSpec::Ray { .. } => "ray".into(),
            ConeSpec::Orthant { n } => format!("orthant:{n}"),
            ConeSpec::Generators { gens } => format!("gens:{}", gens.ncols()),
        }
    }
}

fn check_dim(c: &ConeSpec, x: &DVector<f64>) -> Result<()> {
    if x.len() != c.ambient_dim() {
        return invalid(
            "x",
            format!("length {} does not match ambient dimension {}", x.len(), c.ambient_dim()),
        );
    }
    Ok(())
}

/// Euclidean projection onto the cone.
pub fn project_onto_cone(c: &ConeSpec, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(c, x)?;
    Ok(match c {
        ConeSpec::Subspace { basis } => basis * (basis.transpose() * x),
        ConeSpec::Ray { direction } => direction * direction.dot(x).max(0.0),
        ConeSpec::Orthant { .. } => x.map(|v| v.max(0.0)),
        ConeSpec::Generators { gens } => {
            if x.iter().all(|&v| v == 0.0) {
                return Ok(x.clone());
            }
            nnls(gens, x)?.fitted
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatDimEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
    /// `mean / n`
    pub normalized: f64,
}

impl StatDimEstimate {
    fn from_values(values: &[f64], n: usize) -> Self {
        let est = MeanEstimate::from_samples(values);
        StatDimEstimate {
            mean: est.mean,
            std_error: est.std_error,
            samples: est.samples,
            normalized: est.mean / n as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub width: f64,
    pub std_error: f64,
    pub samples: usize,
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < 100 {
        return invalid("samples", format!("need at least 100 draws, got {samples}"));
    }
    Ok(())
}

struct Draw {
    g_sq: f64,
    p_sq: f64,
    q_sq: f64,
}

/// Projects `samples` Gaussian draws; draw `i` uses the stream `(seed, tag, i)`.
fn project_draws(c: &ConeSpec, samples: usize, seed: u64, domain: u64) -> Result<Vec<Draw>> {
    let n = c.ambient_dim();
    (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[domain, i]);
            let g = DVector::from_iterator(n, (0..n).map(|_| r.sample::<f64, _>(StandardNormal)));
            let p = project_onto_cone(c, &g)?;
            let q = &g - &p;
            Ok(Draw {
                g_sq: g.norm_squared(),
                p_sq: p.norm_squared(),
                q_sq: q.norm_squared(),
            })
        })
        .collect()
}

/// `E ||Pi_C(g)||^2` by Monte Carlo.
pub fn statistical_dimension_mc(c: &ConeSpec, samples: usize, seed: u64) -> Result<StatDimEstimate> {
    check_samples(samples)?;
    let draws = project_draws(c, samples, seed, tag::STATDIM)?;
    let v: Vec<f64> = draws.iter().map(|d| d.p_sq).collect();
    Ok(StatDimEstimate::from_values(&v, c.ambient_dim()))
}

/// `E ||g - Pi_C(g)||^2 = E ||Pi_{C polar}(g)||^2`, on the same draws as
/// [`statistical_dimension_mc`] with the same seed. Fails if any draw breaks
/// `||g||^2 = ||Pi_C g||^2 + ||Pi_polar g||^2` by more than 1e-8 relative.
pub fn polar_statdim_mc(c: &ConeSpec, samples: usize, seed: u64) -> Result<StatDimEstimate> {
    check_samples(samples)?;
    let draws = project_draws(c, samples, seed, tag::STATDIM)?;
    let worst = draws
        .iter()
        .map(|d| (d.g_sq - d.p_sq - d.q_sq).abs() / d.g_sq.max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    if worst > 1e-8 {
        return Err(Error::NoConvergence {
            what: "Moreau additivity",
            iterations: samples,
            residual: worst,
        });
    }
    let v: Vec<f64> = draws.iter().map(|d| d.q_sq).collect();
    Ok(StatDimEstimate::from_values(&v, c.ambient_dim()))
}

/// Gaussian mean width of `C` intersected with the unit ball,
/// `E sup_{x in C, |x| <= 1} <g, x> = E ||Pi_C(g)||`.
pub fn mean_width_mc(c: &ConeSpec, samples: usize, seed: u64) -> Result<WidthEstimate> {
    check_samples(samples)?;
    let draws = project_draws(c, samples, seed, tag::WIDTH)?;
    let v: Vec<f64> = draws.iter().map(|d| d.p_sq.sqrt()).collect();
    let est = MeanEstimate::from_samples(&v);
    Ok(WidthEstimate {
        width: est.mean,
        std_error: est.std_error,
        samples: est.samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoreauCheck {
    /// `||x - p - q||`
    pub recon_error: f64,
    /// `<p, q>`
    pub inner_product: f64,
    /// `| ||x||^2 - ||p||^2 - ||q||^2 | / ||x||^2`, zero for `x = 0`.
    pub pythagoras_error: f64,
}

/// Splits `x` into `p = Pi_C(x)` and `q = x - p` and reports how well the
/// pieces satisfy the Moreau decomposition.
pub fn moreau_check(c: &ConeSpec, x: &DVector<f64>) -> Result<MoreauCheck> {
    let p = project_onto_cone(c, x)?;
    let q = x - &p;
    let x_sq = x.norm_squared();
    let pythagoras_error = if x_sq > 0.0 {
        (x_sq - p.norm_squared() - q.norm_squared()).abs() / x_sq
    } else {
        0.0
    };
    Ok(MoreauCheck {
        recon_error: (x - &p - &q).norm(),
        inner_product: p.dot(&q),
        pythagoras_error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolytopeWidth {
    /// `(E max_i <g, v_i>)^2`
    pub width_sq: f64,
    pub mean_max: f64,
    pub std_error: f64,
    /// `2 ln N`
    pub reference: f64,
    /// `sqrt(2 ln N)`, an upper bound on `mean_max` for unit directions.
    pub max_bound: f64,
}

/// Squared Gaussian width of the convex hull of `N` random unit directions in R^n.
pub fn polytope_width_sq(big_n: usize, n: usize, samples: usize, seed: u64) -> Result<PolytopeWidth> {
    if big_n == 0 {
        return invalid("N", "need at least one vertex");
    }
    let dirs = gen_spherical(n, big_n, seed)?;
    polytope_width_sq_of(&dirs, samples, seed)
}

/// As [`polytope_width_sq`] for explicit directions (the dictionary atoms).
pub fn polytope_width_sq_of(dirs: &Dictionary, samples: usize, seed: u64) -> Result<PolytopeWidth> {
    check_samples(samples)?;
    let n = dirs.n();
    let maxima: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[tag::WIDTH, i]);
            let g: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
            dirs.correlate(&g).into_iter().fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let est = MeanEstimate::from_samples(&maxima);
    let ln_n = (dirs.m() as f64).ln();
    Ok(PolytopeWidth {
        width_sq: est.mean * est.mean,
        mean_max: est.mean,
        std_error: est.std_error,
        reference: 2.0 * ln_n,
        max_bound: (2.0 * ln_n).sqrt(),
    })
}

/// Tolerance on the feasibility residual deciding that a cone meets a subspace.
pub const INTERSECTION_TOL: f64 = 1e-9;

/// Does the subspace spanned by the orthonormal columns of `basis` contain a
/// nonzero point of the polyhedral cone generated by the columns of `gens`?
///
/// Solved as one NNLS problem: with `P` the projector onto the orthogonal
/// complement of the subspace, minimize `||P G a||^2 + (1^T a - 1)^2` over
/// `a >= 0`. A zero residual exhibits `G a` in the subspace with `a != 0`.
/// Returns the verdict and the residual.
pub fn subspace_meets_generators(basis: &DMatrix<f64>, gens: &DMatrix<f64>) -> Result<(bool, f64)> {
    let (n, k) = gens.shape();
    if basis.nrows() != n {
        return invalid("basis", "ambient dimensions differ");
    }
    let resid = if basis.ncols() == 0 {
        gens.clone()
    } else {
        gens - basis * (basis.transpose() * gens)
    };
    let mut a = DMatrix::zeros(n + 1, k);
    a.view_mut((0, 0), (n, k)).copy_from(&resid);
    a.row_mut(n).fill(1.0);
    let mut b = DVector::zeros(n + 1);
    b[n] = 1.0;
    let sol = nnls(&a, &b)?;
    Ok((sol.residual_norm <= INTERSECTION_TOL, sol.residual_norm))
}

/// Do two subspaces (orthonormal bases) share a nonzero vector? True when the
/// sine of the smallest principal angle, the least singular value of
/// `(I - B1 B1^T) B2`, is within [`INTERSECTION_TOL`] of zero.
pub fn subspaces_meet(b1: &DMatrix<f64>, b2: &DMatrix<f64>) -> Result<bool> {
    if b1.nrows() != b2.nrows() {
        return invalid("basis", "ambient dimensions differ");
    }
    if b1.ncols() == 0 || b2.ncols() == 0 {
        return Ok(false);
    }
    let resid = b2 - b1 * (b1.transpose() * b2);
    Ok(resid.singular_values().min() <= INTERSECTION_TOL)
}

/// Whether `c1` and `c2` share a nonzero point. Supported pairs: two
/// subspaces, or a subspace with any polyhedral cone.
pub fn cones_meet(c1: &ConeSpec, c2: &ConeSpec) -> Result<bool> {
    if c1.ambient_dim() != c2.ambient_dim() {
        return invalid("c2", "cones live in different ambient dimensions");
    }
    match (c1, c2) {
        (ConeSpec::Subspace { basis: b1 }, ConeSpec::Subspace { basis: b2 }) => subspaces_meet(b1, b2),
        (ConeSpec::Subspace { basis }, other) | (other, ConeSpec::Subspace { basis }) => {
            Ok(subspace_meets_generators(basis, &other.generator_matrix().unwrap())?.0)
        }
        _ => invalid(
            "c1",
            format!("intersection test for {} and {} is not supported", c1.label(), c2.label()),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn closed_form_projections() {
        let ray = ConeSpec::ray(v(&[1.0, 0.0])).unwrap();
        assert_eq!(project_onto_cone(&ray, &v(&[-1.0, 2.0])).unwrap(), v(&[0.0, 0.0]));
        let orth = ConeSpec::orthant(2).unwrap();
        assert_eq!(project_onto_cone(&orth, &v(&[3.0, -4.0])).unwrap(), v(&[3.0, 0.0]));
        let sub = ConeSpec::coordinate_subspace(3, 2).unwrap();
        assert_eq!(project_onto_cone(&sub, &v(&[1.0, 2.0, 3.0])).unwrap(), v(&[1.0, 2.0, 0.0]));
    }

    #[test]
    fn zero_is_fixed_for_every_variant() {
        let cones = [
            ConeSpec::coordinate_subspace(4, 2).unwrap(),
            ConeSpec::ray(v(&[1.0, 1.0, 0.0, 0.0])).unwrap(),
            ConeSpec::orthant(4).unwrap(),
            ConeSpec::random_generators(4, 3, 1).unwrap(),
        ];
        for c in &cones {
            assert_eq!(project_onto_cone(c, &DVector::zeros(4)).unwrap(), DVector::zeros(4));
        }
    }

    #[test]
    fn constructors_validate() {
        assert!(ConeSpec::subspace(DMatrix::from_element(3, 1, 1.0)).is_err());
        assert!(ConeSpec::ray(DVector::zeros(3)).is_err());
        assert!(ConeSpec::orthant(0).is_err());
        assert!(ConeSpec::generators(DMatrix::zeros(3, 2)).is_err());
        let ray = ConeSpec::ray(v(&[3.0, 4.0])).unwrap();
        assert!(project_onto_cone(&ray, &v(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn point_in_generator_cone_is_fixed() {
        let c = ConeSpec::random_generators(16, 5, 4).unwrap();
        let g = c.generator_matrix().unwrap();
        let x = &g * v(&[0.5, 0.1, 2.0, 0.0, 1.0]);
        let p = project_onto_cone(&c, &x).unwrap();
        assert!((p - &x).norm() <= 1e-10 * x.norm());
    }

    #[test]
    fn moreau_orthant_example() {
        let m = moreau_check(&ConeSpec::orthant(2).unwrap(), &v(&[3.0, -4.0])).unwrap();
        assert_eq!(m.recon_error, 0.0);
        assert_eq!(m.inner_product, 0.0);
        assert_eq!(m.pythagoras_error, 0.0);
    }

    #[test]
    fn small_sample_counts_rejected() {
        let c = ConeSpec::orthant(3).unwrap();
        assert!(statistical_dimension_mc(&c, 99, 0).is_err());
        assert!(mean_width_mc(&c, 10, 0).is_err());
        assert!(polar_statdim_mc(&c, 0, 0).is_err());
    }

    #[test]
    fn statdim_and_polar_add_to_n() {
        let c = ConeSpec::random_generators(10, 4, 2).unwrap();
        let a = statistical_dimension_mc(&c, 500, 7).unwrap();
        let b = polar_statdim_mc(&c, 500, 7).unwrap();
        let draws = project_draws(&c, 500, 7, tag::STATDIM).unwrap();
        let g_mean = MeanEstimate::from_samples(&draws.iter().map(|d| d.g_sq).collect::<Vec<_>>()).mean;
        assert!((a.mean + b.mean - g_mean).abs() < 1e-9 * g_mean);
    }

    #[test]
    fn subspace_meeting_rules() {
        let e = |n: usize, cols: &[usize]| {
            DMatrix::from_fn(n, cols.len(), |r, c| if r == cols[c] { 1.0 } else { 0.0 })
        };
        assert!(subspaces_meet(&e(4, &[0, 1]), &e(4, &[1, 2])).unwrap());
        assert!(!subspaces_meet(&e(4, &[0, 1]), &e(4, &[2, 3])).unwrap());
        // The plane x_3 = 0 contains e_1, a generator of the orthant.
        let (hit, _) = subspace_meets_generators(&e(3, &[0, 1]), &DMatrix::identity(3, 3)).unwrap();
        assert!(hit);
        // The line through (1, -1) meets the quadrant only at the origin.
        let line = DMatrix::from_column_slice(2, 1, &[0.5f64.sqrt(), -(0.5f64.sqrt())]);
        let (hit, res) = subspace_meets_generators(&line, &DMatrix::identity(2, 2)).unwrap();
        assert!(!hit && res > 0.1);
    }

    #[test]
    fn cone_pair_support() {
        let o = ConeSpec::orthant(3).unwrap();
        assert!(cones_meet(&o, &o).is_err());
        let s = ConeSpec::coordinate_subspace(3, 3).unwrap();
        assert!(cones_meet(&o, &s).unwrap());
    }
}
