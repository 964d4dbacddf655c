//! Gaussian tails, Mills-ratio bounds and rectified (ReLU) Gaussian moments.
//!
//! These are the scalar building blocks used by the interference, phase and
//! cone modules. Tail probabilities go through the complementary error
//! function so that tiny tails (t >= 6) keep full relative precision; `1 - cdf`
//! would lose every significant digit there.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, require_finite, Result};

/// 1 / sqrt(2 pi), the standard normal density at zero.
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn std_normal_pdf(t: f64) -> Result<f64> {
    require_finite("t", t)?;
    Ok(pdf(t))
}

#[inline]
pub(crate) fn pdf(t: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * t * t).exp()
}

/// Upper tail `P(Z > t)` of the standard normal.
pub fn gauss_tail_q(t: f64) -> Result<f64> {
    require_finite("t", t)?;
    Ok(tail_q(t))
}

#[inline]
pub(crate) fn tail_q(t: f64) -> f64 {
    0.5 * libm::erfc(t / SQRT_2)
}

/// Inverse of the upper tail: the `t` with `Q(t) = p`, by bisection on
/// `[-40, 40]` down to adjacent floats.
pub fn gauss_tail_q_inverse(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return invalid("p", format!("tail probability must lie in (0, 1), got {p}"));
    }
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail_q(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid.abs().max(1e-300) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Threshold together with its tail probability and density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEval {
    pub t: f64,
    pub q: f64,
    pub pdf: f64,
}

impl TailEval {
    pub fn at(t: f64) -> Result<Self> {
        require_finite("t", t)?;
        Ok(TailEval {
            t,
            q: tail_q(t),
            pdf: pdf(t),
        })
    }
}

/// Mills-ratio bracket `((1/t - 1/t^3) phi(t), phi(t) / t)` around `Q(t)`.
pub fn mills_bounds(t: f64) -> Result<(f64, f64)> {
    require_finite("t", t)?;
    if t <= 0.0 {
        return invalid("t", format!("Mills bounds need t > 0, got {t}"));
    }
    let d = pdf(t);
    Ok(((1.0 / t - 1.0 / (t * t * t)) * d, d / t))
}

/// `E[max(0, X)]` for `X ~ N(0, sigma^2)`, i.e. `sigma / sqrt(2 pi)`.
pub fn rectified_mean(sigma: f64) -> Result<f64> {
    require_finite("sigma", sigma)?;
    if sigma < 0.0 {
        return invalid("sigma", format!("standard deviation must be >= 0, got {sigma}"));
    }
    Ok(sigma * INV_SQRT_2PI)
}

/// Rectified drift of a pre-activation whose variance is perturbed by
/// alignment: `v = sigma0^2 + 2 mu rho`, truncated at zero before the root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatchetEval {
    pub sigma0_sq: f64,
    /// Variance perturbation `2 mu rho`; may be negative.
    pub delta_v: f64,
    /// `max(0, sigma0_sq + delta_v)`.
    pub v_plus: f64,
    pub eta: f64,
    /// True when the raw variance was negative and got clipped to zero.
    pub clipped: bool,
}

pub fn rectified_drift(sigma0_sq: f64, mu: f64, rho: f64) -> Result<RatchetEval> {
    require_finite("sigma0_sq", sigma0_sq)?;
    require_finite("mu", mu)?;
    require_finite("rho", rho)?;
    if sigma0_sq < 0.0 {
        return invalid("sigma0_sq", format!("baseline variance must be >= 0, got {sigma0_sq}"));
    }
    let delta_v = 2.0 * mu * rho;
    let raw = sigma0_sq + delta_v;
    let v_plus = raw.max(0.0);
    Ok(RatchetEval {
        sigma0_sq,
        delta_v,
        v_plus,
        eta: v_plus.sqrt() * INV_SQRT_2PI,
        clipped: raw < 0.0,
    })
}

/// Above this `b` the closed form loses more than about four digits to
/// cancellation and the asymptotic series takes over.
const SERIES_SWITCH: f64 = 10.0;

/// `(1 + b^2) Q(b) / phi(b) - b`, the second derivative of the Mills ratio,
/// from its asymptotic series
/// `sum_k (-1)^k (2k-1)!! (2k+1)(2k+2) / b^(2k+3)`, summed until the terms
/// stop shrinking or fall below the last representable digit.
fn mills_second_derivative_series(b: f64) -> f64 {
    let inv2 = 1.0 / (b * b);
    let mut term = 2.0 * inv2 / b;
    let mut sum = term;
    for k in 1..200 {
        let kf = k as f64;
        // ratio of consecutive terms
        let next = -term * (2.0 * kf - 1.0) * (2.0 * kf + 1.0) * (2.0 * kf + 2.0) / ((2.0 * kf - 1.0) * 2.0 * kf) * inv2;
        if next.abs() >= term.abs() || next.abs() <= 1e-17 * sum.abs() {
            break;
        }
        sum += next;
        term = next;
    }
    sum
}

/// Second moment of the rectified tail, `int_beta^inf (x - beta)^2 p(x) dx`
/// with `p` the `N(0, zeta^2)` density.
///
/// Exact: `zeta^2 [(1 + b^2) Q(b) - b phi(b)]` with `b = beta / zeta`.
pub fn rectified_tail_second_moment(beta: f64, zeta: f64) -> Result<f64> {
    require_finite("beta", beta)?;
    require_finite("zeta", zeta)?;
    if zeta <= 0.0 {
        return invalid("zeta", format!("scale must be > 0, got {zeta}"));
    }
    if beta < 0.0 {
        return invalid("beta", format!("threshold must be >= 0, got {beta}"));
    }
    let b = beta / zeta;
    let core = if b > SERIES_SWITCH {
        pdf(b) * mills_second_derivative_series(b)
    } else {
        (1.0 + b * b) * tail_q(b) - b * pdf(b)
    };
    Ok(zeta * zeta * core.max(0.0))
}

/// Leading term of the published high-bias expansion of the rectified second
/// moment:
/// `zeta^2 / 2 * (zeta / (sqrt(2 pi) beta) - zeta^3 / (sqrt(2 pi) beta^3)) * exp(-beta^2 / (2 zeta^2))`.
///
/// Diagnostic only. It is not a lower bound of
/// [`rectified_tail_second_moment`]; at `(beta, zeta) = (3, 1)` it exceeds the
/// exact value by a factor of about 3.2.
pub fn tail_moment_expansion(beta: f64, zeta: f64) -> Result<f64> {
    require_finite("beta", beta)?;
    require_finite("zeta", zeta)?;
    if beta <= 0.0 || zeta <= 0.0 {
        return invalid("beta", "expansion needs beta > 0 and zeta > 0");
    }
    let s = (2.0 * PI).sqrt();
    let lead = zeta / (s * beta) - zeta.powi(3) / (s * beta.powi(3));
    Ok(0.5 * zeta * zeta * lead * (-beta * beta / (2.0 * zeta * zeta)).exp())
}

/// Ratio of exceedance probabilities `P(X > beta)` with and without the
/// alignment perturbation, linearized and exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceRatio {
    /// `exp(beta^2 mu rho / sigma0^4)`
    pub approx_ratio: f64,
    /// `Q(beta / sqrt(sigma0^2 + 2 mu rho)) / Q(beta / sigma0)`
    pub exact_ratio: f64,
}

impl ExceedanceRatio {
    /// `|log approx - log exact| / |log exact|`; zero when both are 1.
    pub fn relative_log_error(&self) -> f64 {
        let le = self.exact_ratio.ln();
        let la = self.approx_ratio.ln();
        if le == 0.0 {
            la.abs()
        } else {
            (la - le).abs() / le.abs()
        }
    }
}

pub fn exceedance_sensitivity(beta: f64, sigma0: f64, mu: f64, rho: f64) -> Result<ExceedanceRatio> {
    for (name, x) in [("beta", beta), ("sigma0", sigma0), ("mu", mu), ("rho", rho)] {
        require_finite(name, x)?;
    }
    if beta <= 0.0 {
        return invalid("beta", format!("threshold must be > 0, got {beta}"));
    }
    if sigma0 <= 0.0 {
        return invalid("sigma0", format!("baseline scale must be > 0, got {sigma0}"));
    }
    let s0 = sigma0 * sigma0;
    let v = s0 + 2.0 * mu * rho;
    if v <= 0.0 {
        return invalid("rho", format!("perturbed variance {v} is not positive"));
    }
    Ok(ExceedanceRatio {
        approx_ratio: (beta * beta * mu * rho / (s0 * s0)).exp(),
        exact_ratio: tail_q(beta / v.sqrt()) / tail_q(beta / sigma0),
    })
}

/// Drift gap under a symmetric two-point alignment `rho = +-r`:
/// `(eta(r) + eta(-r)) / 2 - eta(0)`.
///
/// The square root of an affine variance is concave, so on the unclipped
/// range this gap is negative; clipping at `v = 0` only makes it more so.
/// The value is returned as computed, sign included.
pub fn jensen_ratchet_gap(sigma0_sq: f64, mu: f64, r: f64) -> Result<f64> {
    if !(sigma0_sq > 0.0) {
        return invalid("sigma0_sq", format!("baseline variance must be > 0, got {sigma0_sq}"));
    }
    require_finite("r", r)?;
    if r < 0.0 {
        return invalid("r", format!("two-point half-width must be >= 0, got {r}"));
    }
    let up = rectified_drift(sigma0_sq, mu, r)?.eta;
    let down = rectified_drift(sigma0_sq, mu, -r)?.eta;
    let center = rectified_drift(sigma0_sq, mu, 0.0)?.eta;
    Ok(0.5 * (up + down) - center)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn density_values() {
        assert!(close(std_normal_pdf(0.0).unwrap(), 0.398_942_280_4, 1e-10));
        assert!(close(std_normal_pdf(1.0).unwrap(), 0.241_970_724_5, 1e-10));
        assert_eq!(std_normal_pdf(2.3).unwrap(), std_normal_pdf(-2.3).unwrap());
        assert!(std_normal_pdf(f64::NAN).is_err());
        assert!(std_normal_pdf(f64::INFINITY).is_err());
    }

    #[test]
    fn tail_values() {
        assert_eq!(gauss_tail_q(0.0).unwrap(), 0.5);
        assert!(close(gauss_tail_q(3.0).unwrap(), 1.349_898e-3, 1e-9));
        assert!(close(gauss_tail_q(-8.0).unwrap(), 1.0, 1e-14));
        assert!(gauss_tail_q(f64::NAN).is_err());
    }

    #[test]
    fn tail_inverse_round_trips() {
        for p in [1e-12, 1e-6, 0.01, 0.25, 0.5, 0.9] {
            let t = gauss_tail_q_inverse(p).unwrap();
            assert!((tail_q(t) - p).abs() <= 1e-12 * p.max(1e-3), "p={p}");
        }
        assert!(gauss_tail_q_inverse(0.0).is_err());
        assert!(gauss_tail_q_inverse(1.0).is_err());
    }

    #[test]
    fn mills_examples() {
        let (lo, hi) = mills_bounds(1.0).unwrap();
        assert_eq!(lo, 0.0);
        assert!(close(hi, 0.241_970_7, 1e-7));
        let (lo, hi) = mills_bounds(3.0).unwrap();
        let q = tail_q(3.0);
        assert!(lo < q && q < hi);
        let (_, hi) = mills_bounds(6.0).unwrap();
        let ratio = hi / tail_q(6.0);
        assert!((1.0..=1.03).contains(&ratio), "ratio {ratio}");
        assert!(mills_bounds(0.0).is_err());
        assert!(mills_bounds(-1.0).is_err());
    }

    #[test]
    fn rectified_mean_examples() {
        assert!(close(rectified_mean(1.0).unwrap(), 0.398_942_3, 1e-7));
        assert_eq!(rectified_mean(0.0).unwrap(), 0.0);
        assert!(close(rectified_mean(2.0).unwrap(), 0.797_884_6, 1e-7));
        assert!(rectified_mean(-0.1).is_err());
    }

    #[test]
    fn rectified_drift_examples() {
        let r = rectified_drift(1.0, 0.1, 0.0).unwrap();
        assert!(close(r.eta, 0.398_942_3, 1e-7));
        assert!(!r.clipped);
        let r = rectified_drift(1.0, 0.1, -10.0).unwrap();
        assert_eq!(r.eta, 0.0);
        assert_eq!(r.v_plus, 0.0);
        assert!(r.clipped);
        let r = rectified_drift(0.25, 0.05, 2.0).unwrap();
        assert!(close(r.eta, 0.45f64.sqrt() * INV_SQRT_2PI, 1e-15));
        assert!(close(r.eta, 0.2676, 1e-4));
        assert!(rectified_drift(-1.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn second_moment_examples() {
        for zeta in [0.3, 1.0, 2.5] {
            let m = rectified_tail_second_moment(0.0, zeta).unwrap();
            assert!(close(m, zeta * zeta / 2.0, 1e-15));
        }
        // Frozen from adaptive quadrature of int_3^inf (x-3)^2 phi(x) dx.
        let m = rectified_tail_second_moment(3.0, 1.0).unwrap();
        assert!((m - 2.034_350_804_869_2e-4).abs() < 1e-15);
        assert!(rectified_tail_second_moment(1.0, 0.0).is_err());
        assert!(rectified_tail_second_moment(-1.0, 1.0).is_err());
    }

    #[test]
    fn expansion_is_above_exact_value_at_three_sigma() {
        let exact = rectified_tail_second_moment(3.0, 1.0).unwrap();
        let lead = tail_moment_expansion(3.0, 1.0).unwrap();
        assert!(close(lead, 6.565_701_351e-4, 1e-12));
        assert!(lead > exact);
    }

    #[test]
    fn exceedance_examples() {
        let r = exceedance_sensitivity(3.0, 1.0, 0.01, 0.0).unwrap();
        assert_eq!(r.approx_ratio, 1.0);
        assert_eq!(r.exact_ratio, 1.0);
        let r = exceedance_sensitivity(3.0, 1.0, 0.01, 1.0).unwrap();
        assert!(close(r.approx_ratio, 0.09f64.exp(), 1e-15));
        assert!(close(r.approx_ratio, 1.0942, 1e-4));
        assert!(r.relative_log_error() <= 0.15, "{:?}", r);
        assert!(exceedance_sensitivity(3.0, 1.0, 1.0, -1.0).is_err());
        assert!(exceedance_sensitivity(0.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn jensen_gap_examples() {
        assert_eq!(jensen_ratchet_gap(1.0, 0.1, 0.0).unwrap(), 0.0);
        let g = jensen_ratchet_gap(1.0, 0.1, 1.0).unwrap();
        let want = 0.5 * (1.2f64.sqrt() + 0.8f64.sqrt()) * INV_SQRT_2PI - INV_SQRT_2PI;
        assert!(close(g, want, 1e-15));
        assert!(close(g, -0.00202, 1e-5));
        let g = jensen_ratchet_gap(1.0, 0.6, 1.0).unwrap();
        assert!(close(g, 0.5 * 2.2f64.sqrt() * INV_SQRT_2PI - INV_SQRT_2PI, 1e-15));
        assert!(close(g, -0.103, 1e-3));
    }
}
