//! Extreme singular values of tall Gaussian matrices and the resulting
//! condition numbers.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{invalid, Error, Result};
use crate::linalg::{gaussian_matrix, MeanEstimate};
use crate::rng::{self, tag};

/// Limiting condition number `(1 + sqrt(gamma)) / (1 - sqrt(gamma))` of an
/// `n x gamma n` Gaussian matrix.
pub fn condition_number_theory(gamma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return invalid("gamma", format!("need 0 <= gamma < 1 (the limit diverges at 1), got {gamma}"));
    }
    let s = gamma.sqrt();
    Ok((1.0 + s) / (1.0 - s))
}

/// Limiting condition number with the density measured against a critical
/// density, `kappa(gamma / gamma_star)`; `None` at or beyond `gamma_star`.
pub fn kappa_overlay(gamma: f64, gamma_star: f64) -> Option<f64> {
    if !(gamma_star > 0.0) {
        return None;
    }
    condition_number_theory(gamma / gamma_star).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectraResult {
    pub n: usize,
    pub k: usize,
    /// `k / n` as realized after rounding.
    pub gamma: f64,
    pub sigma_min_emp: f64,
    pub sigma_max_emp: f64,
    pub sigma_min_std_error: f64,
    pub sigma_max_std_error: f64,
    /// Ratio of the averaged extremes.
    pub kappa_emp: f64,
    pub kappa_theory: f64,
    /// `1 - sqrt(gamma)`
    pub sigma_min_limit: f64,
    /// `1 + sqrt(gamma)`
    pub sigma_max_limit: f64,
    pub trials: usize,
}

const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITER: usize = 200_000;

fn start_vector(k: usize, seed: u64) -> DVector<f64> {
    let mut r = rng::stream(seed, &[tag::SPECTRA, k as u64]);
    let v = DVector::from_fn(k, |_, _| 0.5 + r.random::<f64>());
    let nrm = v.norm();
    v / nrm
}

/// Repeats `v <- apply(v) / |apply(v)|` until the eigen-residual
/// `|apply(v) - lambda v|` falls to `POWER_TOL lambda`. Returns the Rayleigh
/// quotient `v^T apply(v)`.
fn dominant_eigenvalue<F: Fn(&DVector<f64>) -> DVector<f64>>(apply: F, mut v: DVector<f64>, what: &'static str) -> Result<f64> {
    let mut resid = f64::INFINITY;
    for _ in 0..POWER_MAX_ITER {
        let w = apply(&v);
        let lambda = v.dot(&w);
        resid = (&w - &v * lambda).norm();
        if resid <= POWER_TOL * lambda.abs() {
            return Ok(lambda);
        }
        let nrm = w.norm();
        if nrm == 0.0 {
            return Ok(0.0);
        }
        v = w / nrm;
    }
    Err(Error::NoConvergence {
        what,
        iterations: POWER_MAX_ITER,
        residual: resid,
    })
}

/// `(sigma_min, sigma_max)` of a tall matrix, from power iteration on
/// `A^T A` and inverse iteration with a Cholesky factor of `A^T A + 1e-12 I`.
pub fn extreme_singular_values(a: &DMatrix<f64>, seed: u64) -> Result<(f64, f64)> {
    let k = a.ncols();
    if k == 0 || a.nrows() < k {
        return invalid("a", format!("need a tall matrix with k >= 1 columns, got {} x {k}", a.nrows()));
    }
    let gram = a.transpose() * a;
    let top = dominant_eigenvalue(|v| &gram * v, start_vector(k, seed), "power iteration")?;
    let mut shifted = gram.clone();
    for i in 0..k {
        shifted[(i, i)] += 1e-12;
    }
    let chol = shifted.cholesky().ok_or(Error::NoConvergence {
        what: "Cholesky factorization",
        iterations: 0,
        residual: f64::NAN,
    })?;
    let inv_top = dominant_eigenvalue(|v| chol.solve(v), start_vector(k, seed ^ 1), "inverse iteration")?;
    let bottom = (1.0 / inv_top - 1e-12).max(0.0);
    Ok((bottom.sqrt(), top.sqrt()))
}

/// Averaged extreme singular values of `(1 / sqrt(n)) G`, `G` an
/// `n x round(gamma n)` standard Gaussian matrix.
pub fn extreme_singular_values_mc(n: usize, gamma: f64, trials: usize, seed: u64) -> Result<SpectraResult> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return invalid("gamma", format!("need 0 < gamma < 1, got {gamma}"));
    }
    let k = (gamma * n as f64).round() as usize;
    if k == 0 || k >= n {
        return invalid("gamma", format!("round(gamma n) = {k} must lie in [1, n)"));
    }
    if trials == 0 {
        return invalid("trials", "need at least one trial");
    }
    let scale = 1.0 / (n as f64).sqrt();
    let pairs: Vec<(f64, f64)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, &[tag::SPECTRA, t]);
            let a = gaussian_matrix(n, k, &mut r) * scale;
            extreme_singular_values(&a, rng::derive_seed(seed, &[t]))
        })
        .collect::<Result<_>>()?;
    let mins: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let maxs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (lo, hi) = (MeanEstimate::from_samples(&mins), MeanEstimate::from_samples(&maxs));
    let g = k as f64 / n as f64;
    Ok(SpectraResult {
        n,
        k,
        gamma: g,
        sigma_min_emp: lo.mean,
        sigma_max_emp: hi.mean,
        sigma_min_std_error: lo.std_error,
        sigma_max_std_error: hi.std_error,
        kappa_emp: hi.mean / lo.mean,
        kappa_theory: condition_number_theory(g)?,
        sigma_min_limit: 1.0 - g.sqrt(),
        sigma_max_limit: 1.0 + g.sqrt(),
        trials,
    })
}

/// [`extreme_singular_values_mc`] over a density grid with one seed.
pub fn spectra_sweep(n: usize, gammas: &[f64], trials: usize, seed: u64) -> Result<Vec<SpectraResult>> {
    gammas
        .iter()
        .map(|&g| extreme_singular_values_mc(n, g, trials, seed))
        .collect()
}

/// Extreme singular values of the active sub-dictionary `D_S`. Unit-norm
/// atoms are close to Gaussian columns scaled by `1 / sqrt(n)`, so these are
/// comparable to the limits `1 -/+ sqrt(|S| / n)`.
pub fn subdictionary_extremes(d: &Dictionary, support: &[usize]) -> Result<(f64, f64)> {
    crate::dictionary::validate_support(d, "support", support)?;
    extreme_singular_values(&d.submatrix(support), d.seed())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theory_values() {
        assert_eq!(condition_number_theory(0.0).unwrap(), 1.0);
        assert!((condition_number_theory(0.25).unwrap() - 3.0).abs() < 1e-15);
        assert!((condition_number_theory(0.81).unwrap() - 19.0).abs() < 1e-12);
        assert!(condition_number_theory(1.0).is_err());
        assert!(condition_number_theory(-0.1).is_err());
        assert_eq!(kappa_overlay(0.5, 0.38), None);
        assert!((kappa_overlay(0.095, 0.38).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn iteration_matches_svd() {
        let mut r = rng::stream(4, &[]);
        let a = gaussian_matrix(80, 20, &mut r) / 80f64.sqrt();
        let (lo, hi) = extreme_singular_values(&a, 1).unwrap();
        let sv = a.singular_values();
        assert!((hi - sv.max()).abs() <= 1e-8 * hi);
        assert!((lo - sv.min()).abs() <= 1e-8 * hi);
    }

    #[test]
    fn single_column_is_its_norm() {
        let r = extreme_singular_values_mc(400, 1.0 / 400.0, 5, 3).unwrap();
        assert_eq!(r.k, 1);
        assert!((r.sigma_max_emp - r.sigma_min_emp).abs() < 1e-9);
        assert!((r.sigma_max_emp - 1.0).abs() < 0.1);
    }

    #[test]
    fn degenerate_shapes_rejected() {
        assert!(extreme_singular_values_mc(100, 0.001, 1, 0).is_err());
        assert!(extreme_singular_values_mc(100, 1.0, 1, 0).is_err());
        assert!(extreme_singular_values_mc(100, 0.5, 0, 0).is_err());
    }
}
