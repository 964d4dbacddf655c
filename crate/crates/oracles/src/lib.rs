//! Reference computations for the ghostcone test suites.
//!
//! Nothing in here shares code with the main crate. Every routine takes a
//! route different from the production path it checks:
//! tails and moments by quadrature instead of closed forms, chi means through
//! the log-gamma function, intersection probabilities by enumerating
//! intrinsic volumes.

use std::f64::consts::PI;

/// Standard normal density, written out directly.
pub fn phi(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature of `f` over the finite interval `[a, b]`.
///
/// Bisects the worst interval until the summed error estimate falls below
/// `rel_tol * |integral|` (or an absolute floor of 1e-300).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let mut pieces = vec![{
        let (v, e) = gk15(&f, a, b);
        (a, b, v, e)
    }];
    for _ in 0..5000 {
        let total: f64 = pieces.iter().map(|p| p.2).sum();
        let err: f64 = pieces.iter().map(|p| p.3).sum();
        if err <= rel_tol * total.abs() || err < 1e-300 {
            break;
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .unwrap();
        let (lo, hi, _, _) = pieces.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        pieces.push((lo, mid, v1, e1));
        pieces.push((mid, hi, v2, e2));
    }
    // Sum smallest first.
    let mut vals: Vec<f64> = pieces.iter().map(|p| p.2).collect();
    vals.sort_by(|x, y| x.abs().partial_cmp(&y.abs()).unwrap());
    vals.iter().sum()
}

/// Integral of `g(x) * phi(x)` over `[lower, inf)`. The Gaussian factor is
/// negligible beyond `lower + 40`, and the range is split at the mode region so
/// the adaptive rule sees the bulk.
pub fn gaussian_tail_integral<G: Fn(f64) -> f64>(g: G, lower: f64, rel_tol: f64) -> f64 {
    let upper = lower.max(0.0) + 40.0;
    integrate(|x| g(x) * phi(x), lower, upper, rel_tol)
}

/// Upper normal tail `P(Z > t)` by quadrature of the density.
pub fn tail_q(t: f64) -> f64 {
    if t < 0.0 {
        1.0 - tail_q(-t)
    } else {
        gaussian_tail_integral(|_| 1.0, t, 1e-14)
    }
}

/// `int_beta^inf (x - beta)^2 p(x) dx` for `X ~ N(0, zeta^2)`, by quadrature.
pub fn rectified_tail_m2(beta: f64, zeta: f64) -> f64 {
    let b = beta / zeta;
    zeta * zeta * gaussian_tail_integral(|t| (t - b) * (t - b), b, 1e-14)
}

/// `int_tau^inf (t^2 + 1) phi(t) dt + tau phi(tau)` by quadrature.
pub fn dimension_density_integral(tau: f64) -> f64 {
    gaussian_tail_integral(|t| t * t + 1.0, tau, 1e-14) + tau * phi(tau)
}

/// Mean of the chi distribution with `k` degrees of freedom,
/// `sqrt(2) Gamma((k+1)/2) / Gamma(k/2)`.
pub fn chi_mean(k: usize) -> f64 {
    let k = k as f64;
    2f64.sqrt() * (libm::lgamma(0.5 * (k + 1.0)) - libm::lgamma(0.5 * k)).exp()
}

/// Binomial coefficient as a float.
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    (libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0))
        .exp()
        .round()
}

/// Probability that a uniformly random `d`-dimensional subspace of R^n meets
/// the nonnegative orthant outside the origin.
///
/// The orthant's conic intrinsic volumes are `C(n, j) / 2^n`; the Crofton
/// formula for a subspace of codimension `n - d` gives
/// `2 * sum_{j odd} v_{n-d+j}`.
pub fn orthant_subspace_intersection(n: u64, d: u64) -> f64 {
    if d == 0 {
        return 0.0;
    }
    if d >= n {
        return 1.0;
    }
    let codim = n - d;
    let mut p = 0.0;
    let mut j = codim + 1;
    while j <= n {
        p += binomial(n, j);
        j += 2;
    }
    2.0 * p / 2f64.powi(n as i32)
}

/// Root of a continuous function on a grid followed by bisection. Returns the
/// first sign change found scanning left to right with `steps` cells.
pub fn grid_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, steps: usize) -> Option<f64> {
    let mut prev_x = lo;
    let mut prev = f(lo);
    for i in 1..=steps {
        let x = lo + (hi - lo) * i as f64 / steps as f64;
        let v = f(x);
        if prev == 0.0 {
            return Some(prev_x);
        }
        if prev.signum() != v.signum() {
            let (mut a, mut b, mut fa) = (prev_x, x, prev);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let fm = f(m);
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            return Some(0.5 * (a + b));
        }
        prev_x = x;
        prev = v;
    }
    None
}

/// `P(Z > t)` inverted by bisection on the quadrature tail.
pub fn tail_q_inverse(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail_q(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
