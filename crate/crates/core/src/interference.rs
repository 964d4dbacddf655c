//! Sparse compositions, ghost interference and spurious energy.
//!
//! The encoder is the tied-weights map `x -> D^T x` with one shared bias, so
//! the pre-activation of atom `j` is `I_j = <z, d_j>`. Ghosts are all atoms
//! outside the active support.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::{check_disjoint, gen_spherical, gen_structured, validate_support, Dictionary};
use crate::error::{invalid, require_finite, Result};
use crate::linalg::{axpy, dot, norm_sq, CompensatedSum, MeanEstimate};
use crate::rng::{self, tag, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Composition {
    pub support_a: Vec<usize>,
    pub support_b: Vec<usize>,
    pub alpha_a: Vec<f64>,
    pub alpha_b: Vec<f64>,
    /// `D_A alpha_A + D_B alpha_B` in ambient space.
    pub z: Vec<f64>,
    /// `<D_A alpha_A, D_B alpha_B>`
    pub rho_bil: f64,
    pub k: usize,
    /// `k / n`
    pub gamma: f64,
}

impl Composition {
    /// Multiplies every coefficient (and so `z`) by the steering scale `s > 0`.
    pub fn with_steer_scale(mut self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return invalid("steer_scale", format!("must be positive and finite, got {s}"));
        }
        self.alpha_a.iter_mut().for_each(|a| *a *= s);
        self.alpha_b.iter_mut().for_each(|a| *a *= s);
        self.z.iter_mut().for_each(|x| *x *= s);
        self.rho_bil *= s * s;
        Ok(self)
    }

    pub fn is_active(&self, j: usize) -> bool {
        self.support_a.contains(&j) || self.support_b.contains(&j)
    }

    /// Active-set mask over all `m` atoms.
    pub fn active_mask(&self, m: usize) -> Vec<bool> {
        let mut mask = vec![false; m];
        for &i in self.support_a.iter().chain(&self.support_b) {
            mask[i] = true;
        }
        mask
    }
}

fn check_coefficients(name: &'static str, support: &[usize], alpha: &[f64]) -> Result<()> {
    if alpha.len() != support.len() {
        return invalid(
            name,
            format!("{} coefficients for {} atoms", alpha.len(), support.len()),
        );
    }
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return invalid(name, format!("coefficients must be positive and finite, got {a}"));
    }
    Ok(())
}

fn synthesize(d: &Dictionary, support: &[usize], alpha: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; d.n()];
    for (&i, &a) in support.iter().zip(alpha) {
        axpy(a, d.atom(i), &mut z);
    }
    z
}

/// Builds the composed vector `D_A alpha_A + D_B alpha_B`.
pub fn compose(
    d: &Dictionary,
    support_a: &[usize],
    alpha_a: &[f64],
    support_b: &[usize],
    alpha_b: &[f64],
) -> Result<Composition> {
    validate_support(d, "support_a", support_a)?;
    validate_support(d, "support_b", support_b)?;
    check_disjoint(support_a, support_b)?;
    check_coefficients("alpha_a", support_a, alpha_a)?;
    check_coefficients("alpha_b", support_b, alpha_b)?;
    let z_a = synthesize(d, support_a, alpha_a);
    let z_b = synthesize(d, support_b, alpha_b);
    let rho_bil = dot(&z_a, &z_b);
    let z: Vec<f64> = z_a.iter().zip(&z_b).map(|(a, b)| a + b).collect();
    let k = support_a.len() + support_b.len();
    Ok(Composition {
        support_a: support_a.to_vec(),
        support_b: support_b.to_vec(),
        alpha_a: alpha_a.to_vec(),
        alpha_b: alpha_b.to_vec(),
        z,
        rho_bil,
        k,
        gamma: k as f64 / d.n() as f64,
    })
}

pub(crate) fn check_coeff_range(low: f64, high: f64) -> Result<()> {
    require_finite("coeff_range", low)?;
    require_finite("coeff_range", high)?;
    if !(low > 0.0 && low <= high) {
        return invalid("coeff_range", format!("need 0 < low <= high, got ({low}, {high})"));
    }
    Ok(())
}

pub(crate) fn draw_coefficients<R: Rng + ?Sized>(k: usize, low: f64, high: f64, rng: &mut R) -> Vec<f64> {
    if low == high {
        return vec![low; k];
    }
    (0..k).map(|_| low + (high - low) * rng.random::<f64>()).collect()
}

/// `k` i.i.d. uniform draws on `[low, high]`.
pub fn sample_coefficients(k: usize, low: f64, high: f64, seed: u64) -> Result<Vec<f64>> {
    check_coeff_range(low, high)?;
    Ok(draw_coefficients(k, low, high, &mut rng::stream(seed, &[tag::COEFFICIENTS])))
}

/// `k` distinct atom indices drawn uniformly from `0..m`, in draw order.
pub(crate) fn random_support<R: Rng + ?Sized>(m: usize, k: usize, rng: &mut R) -> Vec<usize> {
    index::sample(rng, m, k).into_vec()
}

/// `<z, d_j>` for every inactive atom `j`, in ascending `j`.
pub fn ghost_projections(d: &Dictionary, c: &Composition) -> Vec<f64> {
    let mask = c.active_mask(d.m());
    (0..d.m())
        .filter(|&j| !mask[j])
        .map(|j| dot(&c.z, d.atom(j)))
        .collect()
}

/// Expected coherence scale `sqrt(2 / (pi n))` of independent unit vectors.
pub fn default_mu_eff(n: usize) -> f64 {
    (2.0 / (std::f64::consts::PI * n as f64)).sqrt()
}

/// Two-term prediction of the mean ghost energy,
/// `(|alpha_A|^2 + |alpha_B|^2) / n + 2 mu_eff rho_bil`.
/// `mu_eff` defaults to [`default_mu_eff`].
pub fn lemma1_prediction(
    alpha_a: &[f64],
    alpha_b: &[f64],
    n: usize,
    mu_eff: Option<f64>,
    rho_bil: f64,
) -> Result<f64> {
    if n == 0 {
        return invalid("n", "ambient dimension must be positive");
    }
    let mu = mu_eff.unwrap_or_else(|| default_mu_eff(n));
    Ok((norm_sq(alpha_a) + norm_sq(alpha_b)) / n as f64 + 2.0 * mu * rho_bil)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GhostEnergy {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
}

/// Ghost atoms drawn per trial by [`empirical_ghost_energy`].
pub const GHOSTS_PER_TRIAL: usize = 64;

/// Mean ghost energy `<z, d_j>^2` over fresh spherical dictionaries. Each
/// trial composes `k_A + k_B` atoms with equal coefficients, normalized so
/// `|alpha_A| = |alpha_B| = 1`, and averages over [`GHOSTS_PER_TRIAL`] ghosts.
pub fn empirical_ghost_energy(n: usize, k_a: usize, k_b: usize, trials: usize, seed: u64) -> Result<GhostEnergy> {
    if trials < 100 {
        return invalid("trials", format!("need at least 100 trials, got {trials}"));
    }
    if k_a == 0 {
        return invalid("k_a", "need at least one active atom");
    }
    if k_a + k_b >= n {
        return invalid("k_b", format!("k_A + k_B = {} must stay below n = {n}", k_a + k_b));
    }
    let k = k_a + k_b;
    let m = k + GHOSTS_PER_TRIAL;
    let alpha_a = vec![1.0 / (k_a as f64).sqrt(); k_a];
    let alpha_b = vec![if k_b > 0 { 1.0 / (k_b as f64).sqrt() } else { 0.0 }; k_b];
    let sa: Vec<usize> = (0..k_a).collect();
    let sb: Vec<usize> = (k_a..k).collect();
    let per_trial: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let d = gen_spherical(n, m, rng::derive_seed(seed, &[tag::GHOST, t]))?;
            let c = compose(&d, &sa, &alpha_a, &sb, &alpha_b)?;
            let s: CompensatedSum = ghost_projections(&d, &c).iter().map(|x| x * x).collect();
            Ok(s.value() / GHOSTS_PER_TRIAL as f64)
        })
        .collect::<Result<_>>()?;
    let est = MeanEstimate::from_samples(&per_trial);
    Ok(GhostEnergy {
        mean: est.mean,
        std_error: est.std_error,
        trials,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaCalibration {
    /// `mean + 3 std` of the clean ghost pre-activations.
    pub beta: f64,
    pub mean: f64,
    pub std_dev: f64,
    pub values: u64,
}

/// Running count, mean and centred sum of squares, merged pairwise.
#[derive(Clone, Copy)]
struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Moments { count: 0, mean: 0.0, m2: 0.0 };
        }
        let mean = xs.iter().copied().collect::<CompensatedSum>().value() / xs.len() as f64;
        let m2 = xs.iter().map(|x| (x - mean) * (x - mean)).collect::<CompensatedSum>().value();
        Moments { count: xs.len() as u64, mean, m2 }
    }

    fn merge(self, o: Moments) -> Moments {
        if self.count == 0 {
            return o;
        }
        if o.count == 0 {
            return self;
        }
        let count = self.count + o.count;
        let delta = o.mean - self.mean;
        let mean = self.mean + delta * o.count as f64 / count as f64;
        let m2 = self.m2 + o.m2 + delta * delta * self.count as f64 * o.count as f64 / count as f64;
        Moments { count, mean, m2 }
    }
}

/// Threshold `beta = mean + 3 std` of ghost pre-activations collected from
/// `samples` random clean compositions with `clean_sparsity` atoms and
/// coefficients uniform on `coeff_range`.
pub fn calibrate_beta(
    d: &Dictionary,
    clean_sparsity: usize,
    coeff_range: (f64, f64),
    samples: usize,
    seed: u64,
) -> Result<BetaCalibration> {
    if samples < 100 {
        return invalid("samples", format!("need at least 100 clean compositions, got {samples}"));
    }
    if clean_sparsity == 0 || clean_sparsity >= d.m() {
        return invalid(
            "clean_sparsity",
            format!("need 1 <= clean_sparsity < m = {}", d.m()),
        );
    }
    check_coeff_range(coeff_range.0, coeff_range.1)?;
    let parts: Vec<Moments> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, &[tag::CALIBRATION, i]);
            let s = random_support(d.m(), clean_sparsity, &mut r);
            let a = draw_coefficients(clean_sparsity, coeff_range.0, coeff_range.1, &mut r);
            let c = compose(d, &s, &a, &[], &[])?;
            Ok(Moments::of(&ghost_projections(d, &c)))
        })
        .collect::<Result<_>>()?;
    let tot = parts.into_iter().fold(Moments { count: 0, mean: 0.0, m2: 0.0 }, Moments::merge);
    let std_dev = if tot.count > 1 {
        (tot.m2 / (tot.count - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(BetaCalibration {
        beta: tot.mean + 3.0 * std_dev,
        mean: tot.mean,
        std_dev,
        values: tot.count,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferenceStats {
    /// Mean of `I_j^2` over ghosts (zero when there are none).
    pub per_ghost_energy_mean: f64,
    pub lemma1_prediction: f64,
    /// `|alpha_A|^2 / n`
    pub sigma_sq_a: f64,
    /// `|alpha_B|^2 / n`
    pub sigma_sq_b: f64,
    pub mu_eff: f64,
    pub rho_bil: f64,
    /// `2 mu_eff rho_bil`
    pub cross_term: f64,
    /// `|ReLU(I_J - beta)| / |z|`
    pub spurious_energy: f64,
    pub beta_used: f64,
    pub ghost_count: usize,
    /// Ghosts with `I_j > beta`.
    pub exceedances: usize,
    pub z_norm: f64,
}

/// Runs the encoder `a = ReLU(D^T z - beta)` and measures the energy that
/// leaks onto ghosts, normalized by the ambient norm of `z`.
pub fn spurious_energy(d: &Dictionary, c: &Composition, beta: f64) -> Result<InterferenceStats> {
    if !(beta >= 0.0) {
        return invalid("beta", format!("threshold must be nonnegative, got {beta}"));
    }
    if c.z.len() != d.n() {
        return invalid("composition", "composed vector does not match the dictionary");
    }
    let z_norm = norm_sq(&c.z).sqrt();
    if z_norm == 0.0 {
        return invalid("composition", "composed vector is zero");
    }
    let ghosts = ghost_projections(d, c);
    let mut energy = CompensatedSum::new();
    let mut leak = CompensatedSum::new();
    let mut exceedances = 0;
    for &x in &ghosts {
        energy.add(x * x);
        let a = (x - beta).max(0.0);
        // Rectification leaves the exceedance event unchanged.
        debug_assert_eq!(a > 0.0, x > beta);
        if x > beta {
            exceedances += 1;
            leak.add(a * a);
        }
    }
    let n = d.n();
    let mu_eff = default_mu_eff(n);
    let sigma_sq_a = norm_sq(&c.alpha_a) / n as f64;
    let sigma_sq_b = norm_sq(&c.alpha_b) / n as f64;
    let cross_term = 2.0 * mu_eff * c.rho_bil;
    Ok(InterferenceStats {
        per_ghost_energy_mean: if ghosts.is_empty() {
            0.0
        } else {
            energy.value() / ghosts.len() as f64
        },
        lemma1_prediction: sigma_sq_a + sigma_sq_b + cross_term,
        sigma_sq_a,
        sigma_sq_b,
        mu_eff,
        rho_bil: c.rho_bil,
        cross_term,
        spurious_energy: leak.value().sqrt() / z_norm,
        beta_used: beta,
        ghost_count: ghosts.len(),
        exceedances,
        z_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossTermCheck {
    pub trials: usize,
    /// Trials whose mean ghost energy beat the isotropic prediction.
    pub exceed_count: usize,
    /// Mean of `ghost energy - isotropic prediction` over trials.
    pub mean_excess: f64,
}

/// Structured dictionaries with both supports drawn inside one block and
/// coefficients uniform on `coeff_range`: how often does the mean ghost
/// energy exceed `(|alpha_A|^2 + |alpha_B|^2) / n`?
#[allow(clippy::too_many_arguments)]
pub fn structured_cross_term_check(
    n: usize,
    num_blocks: usize,
    atoms_per_block: usize,
    mu_local: f64,
    k_a: usize,
    k_b: usize,
    coeff_range: (f64, f64),
    trials: usize,
    seed: u64,
) -> Result<CrossTermCheck> {
    if trials == 0 {
        return invalid("trials", "need at least one trial");
    }
    if k_a == 0 || k_b == 0 || k_a + k_b > atoms_per_block {
        return invalid(
            "k_b",
            format!("need k_A, k_B >= 1 with k_A + k_B <= {atoms_per_block} atoms per block"),
        );
    }
    check_coeff_range(coeff_range.0, coeff_range.1)?;
    let excess: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let d = gen_structured(n, num_blocks, atoms_per_block, mu_local, rng::derive_seed(seed, &[tag::DICTIONARY, t]))?;
            let mut r: Stream = rng::stream(seed, &[tag::SUPPORT, t]);
            let block = r.random_range(0..num_blocks);
            let picks = random_support(atoms_per_block, k_a + k_b, &mut r);
            let idx: Vec<usize> = picks.iter().map(|p| block * atoms_per_block + p).collect();
            let a = draw_coefficients(k_a, coeff_range.0, coeff_range.1, &mut r);
            let b = draw_coefficients(k_b, coeff_range.0, coeff_range.1, &mut r);
            let c = compose(&d, &idx[..k_a], &a, &idx[k_a..], &b)?;
            let s = spurious_energy(&d, &c, 0.0)?;
            Ok(s.per_ghost_energy_mean - (s.sigma_sq_a + s.sigma_sq_b))
        })
        .collect::<Result<_>>()?;
    Ok(CrossTermCheck {
        trials,
        exceed_count: excess.iter().filter(|&&e| e > 0.0).count(),
        mean_excess: excess.iter().copied().collect::<CompensatedSum>().value() / trials as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_dict(n: usize) -> Dictionary {
        let mut atoms = vec![0.0; n * n];
        for i in 0..n {
            atoms[i * n + i] = 1.0;
        }
        Dictionary::from_columns(n, n, atoms).unwrap()
    }

    #[test]
    fn compose_single_atom() {
        let d = gen_spherical(8, 4, 1).unwrap();
        let c = compose(&d, &[2], &[1.0], &[], &[]).unwrap();
        assert_eq!(c.z, d.atom(2));
        assert_eq!(c.k, 1);
        assert_eq!(c.rho_bil, 0.0);
    }

    #[test]
    fn compose_validation() {
        let d = gen_spherical(8, 4, 1).unwrap();
        assert!(compose(&d, &[0, 1], &[1.0, 1.0], &[1], &[1.0]).is_err());
        assert!(compose(&d, &[4], &[1.0], &[], &[]).is_err());
        assert!(compose(&d, &[0], &[0.0], &[], &[]).is_err());
        assert!(compose(&d, &[0], &[1.0, 2.0], &[], &[]).is_err());
        assert!(compose(&d, &[0, 0], &[1.0, 2.0], &[], &[]).is_err());
    }

    #[test]
    fn rho_bil_matches_cross_correlation() {
        let d = gen_spherical(32, 12, 3).unwrap();
        let (sa, sb) = ([0, 3, 5], [7, 9]);
        let (aa, ab) = ([1.0, 0.9, 1.1], [0.8, 1.2]);
        let c = compose(&d, &sa, &aa, &sb, &ab).unwrap();
        let cc = crate::dictionary::cross_correlation(&d, &sa, &sb, &aa, &ab).unwrap();
        assert!((c.rho_bil - cc.rho_bil).abs() < 1e-14);
    }

    #[test]
    fn coefficient_sampling() {
        assert_eq!(sample_coefficients(3, 1.0, 1.0, 0).unwrap(), vec![1.0; 3]);
        assert!(sample_coefficients(0, 0.8, 1.2, 0).unwrap().is_empty());
        assert!(sample_coefficients(3, 0.0, 1.0, 0).is_err());
        assert!(sample_coefficients(3, 1.2, 0.8, 0).is_err());
        let draws = sample_coefficients(100_000, 0.8, 1.2, 5).unwrap();
        assert!(draws.iter().all(|&a| (0.8..=1.2).contains(&a)));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 1.0).abs() < 0.004);
    }

    #[test]
    fn orthonormal_dictionary_has_silent_ghosts() {
        let d = identity_dict(6);
        let c = compose(&d, &[0, 1], &[1.0, 2.0], &[3], &[1.0]).unwrap();
        let g = ghost_projections(&d, &c);
        assert_eq!(g, vec![0.0; 3]);
        let s = spurious_energy(&d, &c, 0.0).unwrap();
        assert_eq!(s.spurious_energy, 0.0);
        let cal = calibrate_beta(&d, 2, (1.0, 1.0), 100, 0).unwrap();
        assert_eq!(cal.beta, 0.0);
    }

    #[test]
    fn no_ghosts_when_everything_active() {
        let d = gen_spherical(4, 3, 0).unwrap();
        let c = compose(&d, &[0, 1, 2], &[1.0; 3], &[], &[]).unwrap();
        assert!(ghost_projections(&d, &c).is_empty());
    }

    #[test]
    fn lemma1_arithmetic() {
        let unit = [1.0];
        assert_eq!(lemma1_prediction(&unit, &unit, 256, None, 0.0).unwrap(), 2.0 / 256.0);
        assert_eq!(lemma1_prediction(&unit, &[], 256, None, 0.0).unwrap(), 1.0 / 256.0);
        let v = lemma1_prediction(&unit, &unit, 256, Some(0.0498), 0.3).unwrap();
        assert!((v - 0.037_692_5).abs() < 1e-12);
    }

    #[test]
    fn huge_beta_silences_everything() {
        let d = gen_spherical(64, 512, 2).unwrap();
        let c = compose(&d, &[1, 2, 3], &[1.0; 3], &[], &[]).unwrap();
        let s = spurious_energy(&d, &c, 1e12).unwrap();
        assert_eq!(s.spurious_energy, 0.0);
        assert_eq!(s.exceedances, 0);
        assert!(spurious_energy(&d, &c, -1.0).is_err());
    }

    #[test]
    fn steering_scale_is_linear() {
        let d = gen_spherical(16, 40, 2).unwrap();
        let c = compose(&d, &[1], &[1.0], &[2], &[1.0]).unwrap();
        let s = c.clone().with_steer_scale(2.5).unwrap();
        assert!((s.rho_bil - 6.25 * c.rho_bil).abs() < 1e-14);
        // Scaling z and beta together leaves the normalized leak unchanged.
        let e1 = spurious_energy(&d, &c, 0.1).unwrap().spurious_energy;
        let e2 = spurious_energy(&d, &s, 0.25).unwrap().spurious_energy;
        assert!((e1 - e2).abs() < 1e-12);
        assert!(c.with_steer_scale(0.0).is_err());
    }

    #[test]
    fn calibration_is_homogeneous() {
        let d = gen_spherical(64, 256, 8).unwrap();
        let a = calibrate_beta(&d, 8, (1.0, 1.0), 100, 1).unwrap();
        let b = calibrate_beta(&d, 8, (2.0, 2.0), 100, 1).unwrap();
        assert!((b.beta - 2.0 * a.beta).abs() < 1e-12);
        assert!(calibrate_beta(&d, 8, (1.0, 1.0), 99, 1).is_err());
    }

    #[test]
    fn ghost_energy_preconditions() {
        assert!(empirical_ghost_energy(16, 1, 0, 99, 0).is_err());
        assert!(empirical_ghost_energy(16, 8, 8, 100, 0).is_err());
    }
}
