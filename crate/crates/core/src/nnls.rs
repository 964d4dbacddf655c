//! Nonnegative least squares, `min ||G a - x||` subject to `a >= 0`.
//!
//! Lawson-Hanson active set. The entering column is the one with the largest
//! positive dual value, lowest index on ties. Each unconstrained subproblem
//! is solved by Householder QR of the passive columns.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub coef: DVector<f64>,
    /// `G a`
    pub fitted: DVector<f64>,
    /// `||G a - x||`
    pub residual_norm: f64,
    /// Largest violation of the KKT conditions: positive dual entries on
    /// zero coefficients and nonzero dual entries on positive ones.
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Solves the least-squares problem restricted to `cols`.
fn solve_passive(g: &DMatrix<f64>, x: &DVector<f64>, cols: &[usize]) -> DVector<f64> {
    let sub = g.select_columns(cols);
    let qr = sub.clone().qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    let well_posed = r.diagonal().iter().all(|d| d.abs() > 1e-12 * scale);
    if well_posed {
        let qtx = qr.q().transpose() * x;
        if let Some(s) = r.solve_upper_triangular(&qtx) {
            return s;
        }
    }
    // Nearly dependent passive set: minimum-norm solution.
    sub.svd(true, true)
        .solve(x, 1e-12 * scale)
        .unwrap_or_else(|_| DVector::zeros(cols.len()))
}

/// Solves `min ||g a - x||, a >= 0`. Gives up after `10 k` outer iterations
/// with `k` the number of columns.
pub fn nnls(g: &DMatrix<f64>, x: &DVector<f64>) -> Result<NnlsSolution> {
    let (n, k) = g.shape();
    if x.len() != n {
        return invalid("x", format!("length {} does not match {n} rows", x.len()));
    }
    if k == 0 {
        return Ok(NnlsSolution {
            coef: DVector::zeros(0),
            fitted: DVector::zeros(n),
            residual_norm: x.norm(),
            kkt_residual: 0.0,
            iterations: 0,
        });
    }
    let col_scale = g.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let tol = 1e-11 * (x.norm() * col_scale).max(f64::MIN_POSITIVE);

    let mut coef = DVector::<f64>::zeros(k);
    let mut passive = vec![false; k];
    let cap = 10 * k;
    let mut iterations = 0;

    loop {
        let resid = x - g * &coef;
        let dual = g.transpose() * &resid;
        let entering = (0..k)
            .filter(|&j| !passive[j] && dual[j] > tol)
            .fold(None, |best: Option<usize>, j| match best {
                Some(b) if dual[b] >= dual[j] => Some(b),
                _ => Some(j),
            });
        let Some(j) = entering else { break };
        if iterations == cap {
            let viol = (0..k)
                .filter(|&i| !passive[i])
                .map(|i| dual[i])
                .fold(0.0, f64::max);
            return Err(Error::NoConvergence {
                what: "NNLS active set",
                iterations,
                residual: viol,
            });
        }
        iterations += 1;
        passive[j] = true;

        // Inner loop: step toward the unconstrained solution until it is
        // feasible. Each pass drops at least one column, so it terminates.
        loop {
            let cols: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let s = solve_passive(g, x, &cols);
            if s.iter().all(|&v| v > 0.0) {
                for (&c, &v) in cols.iter().zip(s.iter()) {
                    coef[c] = v;
                }
                break;
            }
            let mut theta = f64::INFINITY;
            for (&c, &v) in cols.iter().zip(s.iter()) {
                if v <= 0.0 {
                    let step = coef[c] / (coef[c] - v);
                    if step < theta {
                        theta = step;
                    }
                }
            }
            for (&c, &v) in cols.iter().zip(s.iter()) {
                coef[c] += theta * (v - coef[c]);
            }
            let mut dropped = false;
            for &c in &cols {
                if coef[c] <= 1e-15 * (1.0 + coef.amax()) {
                    coef[c] = 0.0;
                    passive[c] = false;
                    dropped = true;
                }
            }
            if !dropped {
                // theta came from a coefficient that is now exactly zero.
                let c = cols
                    .iter()
                    .copied()
                    .zip(s.iter())
                    .filter(|(_, &v)| v <= 0.0)
                    .map(|(c, _)| c)
                    .min_by(|&a, &b| coef[a].partial_cmp(&coef[b]).unwrap())
                    .unwrap();
                coef[c] = 0.0;
                passive[c] = false;
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }

    let fitted = g * &coef;
    let resid = x - &fitted;
    let dual = g.transpose() * &resid;
    let kkt_residual = (0..k)
        .map(|i| if passive[i] { dual[i].abs() } else { dual[i].max(0.0) })
        .fold(0.0, f64::max);
    Ok(NnlsSolution {
        residual_norm: resid.norm(),
        coef,
        fitted,
        kkt_residual,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;
    use crate::rng;

    #[test]
    fn orthant_case_is_clipping() {
        let g = DMatrix::identity(3, 3);
        let x = DVector::from_vec(vec![3.0, -4.0, 0.5]);
        let s = nnls(&g, &x).unwrap();
        let want = [3.0, 0.0, 0.5];
        assert!(s.coef.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-14));
        assert!((s.residual_norm - 4.0).abs() < 1e-14);
    }

    #[test]
    fn interior_point_is_reproduced() {
        let mut r = rng::stream(1, &[]);
        let g = gaussian_matrix(20, 5, &mut r);
        let a = DVector::from_vec(vec![0.3, 1.0, 2.0, 0.1, 0.7]);
        let x = &g * &a;
        let s = nnls(&g, &x).unwrap();
        assert!((s.coef - a).amax() < 1e-10);
        assert!(s.residual_norm < 1e-10);
    }

    #[test]
    fn kkt_conditions_hold_on_random_problems() {
        for seed in 0..50 {
            let mut r = rng::stream(seed, &[9]);
            let g = gaussian_matrix(12, 8, &mut r);
            let x = DVector::from_iterator(12, gaussian_matrix(12, 1, &mut r).iter().copied());
            let s = nnls(&g, &x).unwrap();
            assert!(s.coef.iter().all(|&c| c >= 0.0));
            assert!(s.kkt_residual < 1e-10, "seed {seed}: {}", s.kkt_residual);
            // Complementary slackness makes the residual orthogonal to the fit.
            assert!((x - &s.fitted).dot(&s.fitted).abs() < 1e-10);
        }
    }

    #[test]
    fn redundant_generators_are_tolerated() {
        // Three generators in the plane, one a positive combination of the others.
        let g = DMatrix::from_column_slice(2, 3, &[1.0, 0.0, 0.0, 1.0, 0.6, 0.8]);
        let x = DVector::from_vec(vec![2.0, 1.0]);
        let s = nnls(&g, &x).unwrap();
        assert!(s.residual_norm < 1e-12);
        assert!(s.kkt_residual < 1e-10);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let g = DMatrix::<f64>::identity(3, 3);
        assert!(nnls(&g, &DVector::zeros(2)).is_err());
    }
}
