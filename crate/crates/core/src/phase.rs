//! Phase thresholds and phase scans.
//!
//! Three closed-form boundary equations for the critical density, the
//! polyhedral ghost-cone dimension formulas, empirical spurious-energy scans
//! with transition detection, and the random-geometry checks (Gordon escape,
//! kinematic intersection) behind them.

use std::f64::consts::{E, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{cones_meet, mean_width_mc, ConeSpec};
use crate::config::{BetaPolicy, DictKindConfig, ExperimentConfig, ScanMode};
use crate::dictionary::Dictionary;
use crate::error::{invalid, require_finite, Error, Result};
use crate::gauss_tail::{gauss_tail_q_inverse, pdf};
use crate::interference::{
    calibrate_beta, compose, draw_coefficients, random_support, spurious_energy, BetaCalibration,
};
use crate::linalg::{haar_orthogonal, CompensatedSum};
use crate::rng::{self, tag};

/// Residual a returned root must meet.
pub const ROOT_TOL: f64 = 1e-10;
/// Distance kept from open interval ends.
const EDGE_EPS: f64 = 1e-9;
/// Grid cells scanned for the first sign change before bisecting.
const SCAN_CELLS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdVariant {
    /// `sqrt(g) + sqrt(2 (d - g) ln(e (d - g) / sqrt(2 pi))) = 1`
    MainText,
    /// `sqrt(g) + sqrt(2 (d - g) ln(e / ((d - g) sqrt(2 pi)))) = 1`
    Appendix,
    /// `g + Delta(d - g) = 1` with `Delta(rho) = 2 Q(tau) + 2 tau phi(tau)`
    /// and `Q(tau) = 1 / (2 rho)`.
    Integral,
}

impl ThresholdVariant {
    pub const ALL: [ThresholdVariant; 3] = [
        ThresholdVariant::MainText,
        ThresholdVariant::Appendix,
        ThresholdVariant::Integral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ThresholdVariant::MainText => "main_text",
            ThresholdVariant::Appendix => "appendix",
            ThresholdVariant::Integral => "integral",
        }
    }
}

impl std::str::FromStr for ThresholdVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "main_text" | "maintext" | "main" => Ok(ThresholdVariant::MainText),
            "appendix" => Ok(ThresholdVariant::Appendix),
            "integral" => Ok(ThresholdVariant::Integral),
            other => invalid("variant", format!("unknown threshold variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSolution {
    pub variant: ThresholdVariant,
    pub delta_dict: f64,
    pub gamma_star: Option<f64>,
    /// `|boundary(gamma_star)|`
    pub residual: Option<f64>,
    /// Final bisection interval; the boundary changes sign across it.
    pub bracket: Option<(f64, f64)>,
    /// Boundary values at the bracket ends.
    pub bracket_values: Option<(f64, f64)>,
    /// Tail threshold at the root (integral variant).
    pub tau: Option<f64>,
    /// `sqrt(2 pi) / (e (delta - gamma_star))` (main-text variant).
    pub delta_gap: Option<f64>,
    /// The root sits on the edge of the admissible interval, where the
    /// boundary vanishes without changing sign.
    pub at_domain_edge: bool,
    pub diagnostic: Option<String>,
}

impl ThresholdSolution {
    fn none(variant: ThresholdVariant, delta_dict: f64, why: String) -> Self {
        ThresholdSolution {
            variant,
            delta_dict,
            gamma_star: None,
            residual: None,
            bracket: None,
            bracket_values: None,
            tau: None,
            delta_gap: None,
            at_domain_edge: false,
            diagnostic: Some(why),
        }
    }
}

enum RootSearch {
    Root { x: f64, fx: f64, bracket: (f64, f64), values: (f64, f64) },
    Edge { x: f64, fx: f64 },
    AllPositive,
    AllNegative,
    Mixed,
    Stalled { x: f64, fx: f64 },
}

/// First sign change of `h` on `[a, b]` (ends inset by `EDGE_EPS`), refined
/// by bisection. Falls back to the closed ends when `h` vanishes there.
fn find_root<H: Fn(f64) -> f64>(h: H, a: f64, b: f64) -> RootSearch {
    let (lo, hi) = (a + EDGE_EPS, b - EDGE_EPS);
    let mut cell = None;
    let mut prev = (lo, h(lo));
    let (mut pos, mut neg) = (prev.1 > 0.0, prev.1 < 0.0);
    if prev.1 == 0.0 {
        return RootSearch::Root { x: lo, fx: 0.0, bracket: (lo, lo), values: (0.0, 0.0) };
    }
    if hi > lo {
        for i in 1..=SCAN_CELLS {
            let x = lo + (hi - lo) * i as f64 / SCAN_CELLS as f64;
            let fx = h(x);
            pos |= fx > 0.0;
            neg |= fx < 0.0;
            if fx == 0.0 || (fx > 0.0) != (prev.1 > 0.0) {
                cell = Some((prev, (x, fx)));
                break;
            }
            prev = (x, fx);
        }
    }
    let Some(((mut l, mut fl), (mut r, mut fr))) = cell else {
        for x in [a, b] {
            let fx = h(x);
            if fx.abs() <= ROOT_TOL {
                return RootSearch::Edge { x, fx };
            }
        }
        return match (pos, neg) {
            (true, false) => RootSearch::AllPositive,
            (false, true) => RootSearch::AllNegative,
            _ => RootSearch::Mixed,
        };
    };
    if fr == 0.0 {
        return RootSearch::Root { x: r, fx: 0.0, bracket: (l, r), values: (fl, fr) };
    }
    for _ in 0..200 {
        let mid = 0.5 * (l + r);
        if mid <= l || mid >= r {
            break;
        }
        let fm = h(mid);
        if fm == 0.0 {
            return RootSearch::Root { x: mid, fx: 0.0, bracket: (l, r), values: (fl, fr) };
        }
        if (fm > 0.0) == (fl > 0.0) {
            l = mid;
            fl = fm;
        } else {
            r = mid;
            fr = fm;
        }
    }
    let (x, fx) = if fl.abs() <= fr.abs() { (l, fl) } else { (r, fr) };
    if fx.abs() <= ROOT_TOL {
        RootSearch::Root { x, fx, bracket: (l, r), values: (fl, fr) }
    } else {
        RootSearch::Stalled { x, fx }
    }
}

fn check_delta(delta_dict: f64) -> Result<()> {
    require_finite("delta_dict", delta_dict)?;
    if delta_dict <= 1.0 {
        return invalid("delta_dict", format!("overcompleteness must exceed 1, got {delta_dict}"));
    }
    Ok(())
}

fn finish<H: Fn(f64) -> f64>(
    variant: ThresholdVariant,
    delta_dict: f64,
    h: H,
    a: f64,
    b: f64,
) -> ThresholdSolution {
    let mut sol = ThresholdSolution::none(variant, delta_dict, String::new());
    sol.diagnostic = None;
    match find_root(h, a, b) {
        RootSearch::Root { x, fx, bracket, values } => {
            sol.gamma_star = Some(x);
            sol.residual = Some(fx.abs());
            sol.bracket = Some(bracket);
            sol.bracket_values = Some(values);
        }
        RootSearch::Edge { x, fx } => {
            sol.gamma_star = Some(x);
            sol.residual = Some(fx.abs());
            sol.at_domain_edge = true;
            sol.diagnostic = Some(format!(
                "boundary touches zero at the domain edge gamma = {x} without a sign change"
            ));
        }
        RootSearch::AllPositive => {
            sol.diagnostic = Some(format!(
                "left side exceeds 1 on the whole admissible interval [{a}, {b}]; no feasible boundary"
            ));
        }
        RootSearch::AllNegative => {
            sol.diagnostic = Some(format!(
                "left side stays below 1 on the whole admissible interval [{a}, {b}]; no crossing"
            ));
        }
        RootSearch::Mixed => {
            sol.diagnostic = Some("boundary touches 1 without crossing on the scan grid".into());
        }
        RootSearch::Stalled { x, fx } => {
            sol.diagnostic = Some(format!(
                "bisection stalled at gamma = {x} with residual {fx:e} above {ROOT_TOL:e}"
            ));
        }
    }
    sol
}

/// `sqrt(2 pi) / e`: below this excess `delta - gamma` the main-text log is negative.
const MAIN_LOG_EDGE: f64 = 0.922_137_008_895_789_3;
/// `e / sqrt(2 pi)`: above this excess the appendix log is negative.
const APPENDIX_LOG_EDGE: f64 = 1.084_437_551_419_227_6;

/// `ln(arg)` clamped at zero, with arguments within a few ulps of 1 read as 1
/// so the guard edge itself evaluates to an exact zero log.
fn guarded_ln(arg: f64) -> f64 {
    if (arg - 1.0).abs() <= 4.0 * f64::EPSILON {
        0.0
    } else {
        arg.ln().max(0.0)
    }
}

fn main_text_boundary(delta: f64, g: f64) -> f64 {
    let r = delta - g;
    let log = guarded_ln(E * r / (2.0 * PI).sqrt());
    g.sqrt() + (2.0 * r * log).sqrt() - 1.0
}

fn appendix_boundary(delta: f64, g: f64) -> f64 {
    let r = delta - g;
    let log = guarded_ln(E / (r * (2.0 * PI).sqrt()));
    g.sqrt() + (2.0 * r * log).sqrt() - 1.0
}

/// `tau` with `Q(tau) = 1 / (2 rho)`, for `rho >= 1`.
pub fn integral_tau(rho: f64) -> Result<f64> {
    require_finite("rho", rho)?;
    if rho < 1.0 {
        return invalid("rho", format!("need rho >= 1 for a nonnegative tau, got {rho}"));
    }
    if rho == 1.0 {
        return Ok(0.0);
    }
    gauss_tail_q_inverse(0.5 / rho)
}

/// `Delta(rho) = int_tau^inf (t^2 + 1) phi(t) dt + tau phi(tau) = 2 Q(tau) + 2 tau phi(tau)`
/// with `Q(tau) = 1 / (2 rho)`.
pub fn integral_delta(rho: f64) -> Result<f64> {
    let tau = integral_tau(rho)?;
    Ok(1.0 / rho + 2.0 * tau * pdf(tau))
}

fn integral_boundary(delta: f64, g: f64) -> f64 {
    let rho = delta - g;
    match integral_delta(rho) {
        Ok(d) => g + d - 1.0,
        Err(_) => f64::NAN,
    }
}

/// Main-text boundary. Admissible where the log is nonnegative,
/// `delta - gamma >= sqrt(2 pi) / e`.
pub fn solve_threshold_maintext(delta_dict: f64) -> Result<ThresholdSolution> {
    check_delta(delta_dict)?;
    let v = ThresholdVariant::MainText;
    let a = 0.0;
    let b = 1.0f64.min(delta_dict).min(delta_dict - MAIN_LOG_EDGE);
    if b <= a {
        return Ok(ThresholdSolution::none(
            v,
            delta_dict,
            format!("log argument e (delta - gamma) / sqrt(2 pi) is below 1 for every gamma in (0, 1) at delta = {delta_dict}"),
        ));
    }
    let mut sol = finish(v, delta_dict, |g| main_text_boundary(delta_dict, g), a, b);
    if let Some(g) = sol.gamma_star {
        sol.delta_gap = Some((2.0 * PI).sqrt() / (E * (delta_dict - g)));
    }
    Ok(sol)
}

/// Appendix boundary. Admissible where `delta - gamma <= e / sqrt(2 pi)`.
pub fn solve_threshold_appendix(delta_dict: f64) -> Result<ThresholdSolution> {
    check_delta(delta_dict)?;
    let v = ThresholdVariant::Appendix;
    let a = 0.0f64.max(delta_dict - APPENDIX_LOG_EDGE);
    let b = 1.0f64.min(delta_dict);
    if b <= a {
        return Ok(ThresholdSolution::none(
            v,
            delta_dict,
            format!(
                "domain guard delta - gamma <= e / sqrt(2 pi) fails for every gamma in (0, 1) at delta = {delta_dict}"
            ),
        ));
    }
    Ok(finish(v, delta_dict, |g| appendix_boundary(delta_dict, g), a, b))
}

/// Integral-representation boundary `gamma + Delta(delta - gamma) = 1`,
/// admissible for `delta - gamma >= 1`.
pub fn solve_threshold_integral(delta_dict: f64) -> Result<ThresholdSolution> {
    check_delta(delta_dict)?;
    let v = ThresholdVariant::Integral;
    let a = 0.0;
    let b = 1.0f64.min(delta_dict - 1.0);
    let mut sol = finish(v, delta_dict, |g| integral_boundary(delta_dict, g), a, b);
    if let Some(g) = sol.gamma_star {
        sol.tau = Some(integral_tau(delta_dict - g)?);
    }
    Ok(sol)
}

pub fn solve_threshold(variant: ThresholdVariant, delta_dict: f64) -> Result<ThresholdSolution> {
    match variant {
        ThresholdVariant::MainText => solve_threshold_maintext(delta_dict),
        ThresholdVariant::Appendix => solve_threshold_appendix(delta_dict),
        ThresholdVariant::Integral => solve_threshold_integral(delta_dict),
    }
}

/// The boundary function of a variant at `gamma` (zero on the threshold).
pub fn threshold_boundary(variant: ThresholdVariant, delta_dict: f64, gamma: f64) -> f64 {
    match variant {
        ThresholdVariant::MainText => main_text_boundary(delta_dict, gamma),
        ThresholdVariant::Appendix => appendix_boundary(delta_dict, gamma),
        ThresholdVariant::Integral => integral_boundary(delta_dict, gamma),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiVariants {
    /// `2 N / ln(e n / (N sqrt(2 pi)))`
    pub variant_main: f64,
    /// Log argument of the main formula is at most 1.
    pub main_flagged: bool,
    /// `(2 N / n) ln((n / N) sqrt(2 pi))`
    pub variant_appendix: f64,
    /// Log argument of the appendix formula is at most 1.
    pub appendix_flagged: bool,
}

/// Both printed approximations of the normalized ghost-polar dimension.
pub fn phi_polyhedral(big_n: usize, n: usize) -> Result<PhiVariants> {
    if big_n == 0 || n == 0 {
        return invalid("N", "need N >= 1 and n >= 1");
    }
    let (nn, n) = (big_n as f64, n as f64);
    let s2p = (2.0 * PI).sqrt();
    let main_arg = E * n / (nn * s2p);
    let app_arg = (n / nn) * s2p;
    Ok(PhiVariants {
        variant_main: 2.0 * nn / main_arg.ln(),
        main_flagged: main_arg <= 1.0,
        variant_appendix: 2.0 * nn / n * app_arg.ln(),
        appendix_flagged: app_arg <= 1.0,
    })
}

/// Ghost-cone width after drift: `w + sqrt(k) eta`.
pub fn drift_widening(k: usize, eta: f64, base_width: f64) -> Result<f64> {
    if !(eta >= 0.0 && base_width >= 0.0) || !eta.is_finite() || !base_width.is_finite() {
        return invalid("eta", "drift and base width must be finite and nonnegative");
    }
    Ok(base_width + (k as f64).sqrt() * eta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseScanResult {
    pub dict_kind: DictKindConfig,
    pub gamma_grid: Vec<f64>,
    pub k_grid: Vec<usize>,
    pub mean_espur: Vec<f64>,
    pub std_espur: Vec<f64>,
    /// Mean of per-instance ghost energy `<z, d_j>^2`.
    pub mean_ghost_energy: Vec<f64>,
    /// Fraction of ghosts above `beta`, averaged over trials.
    pub mean_exceed_fraction: Vec<f64>,
    pub trials_per_point: usize,
    pub beta: f64,
    pub beta_calibration: Option<BetaCalibration>,
    pub threshold_eta: f64,
    pub gamma_star_emp: Option<f64>,
    /// Grid points where the mean drops by more than two standard deviations
    /// below its predecessor.
    pub nonmonotone_points: Vec<f64>,
    pub config: ExperimentConfig,
}

/// Per-cell measurement.
#[derive(Debug, Clone, Copy)]
struct Cell {
    espur: f64,
    ghost_energy: f64,
    exceed_fraction: f64,
}

/// The beta a config prescribes, calibrating on `calibration_dict` if needed.
pub fn resolve_beta(cfg: &ExperimentConfig, calibration_dict: &Dictionary) -> Result<(f64, Option<BetaCalibration>)> {
    match cfg.beta_policy {
        BetaPolicy::Fixed(b) => Ok((b, None)),
        BetaPolicy::Calibrated { samples, clean_gamma } => {
            let cal = calibrate_beta(
                calibration_dict,
                cfg.k_at(clean_gamma),
                cfg.coeff_range,
                samples,
                rng::derive_seed(cfg.seed, &[tag::CALIBRATION]),
            )?;
            Ok((cal.beta, Some(cal)))
        }
    }
}

fn dict_seed(cfg: &ExperimentConfig, trial: Option<u64>) -> u64 {
    match trial {
        Some(t) => rng::derive_seed(cfg.seed, &[tag::DICTIONARY, t]),
        None => rng::derive_seed(cfg.seed, &[tag::DICTIONARY]),
    }
}

/// Calibration dictionary: the shared one in fixed mode, else its own draw.
fn calibration_dictionary(cfg: &ExperimentConfig, kind: &DictKindConfig) -> Result<Dictionary> {
    let seed = match cfg.scan_mode {
        ScanMode::FixedDict => dict_seed(cfg, None),
        ScanMode::FreshDict => rng::derive_seed(cfg.seed, &[tag::CALIBRATION, 0]),
    };
    kind.generate(cfg.n, cfg.m(), seed)
}

fn run_trial(cfg: &ExperimentConfig, d: &Dictionary, trial: u64, beta: f64) -> Result<Vec<Cell>> {
    let (lo, hi) = cfg.coeff_range;
    cfg.gamma_grid
        .iter()
        .map(|&g| {
            let mut r = rng::stream(cfg.seed, &[tag::SUPPORT, g.to_bits(), trial]);
            let k = cfg.k_at(g);
            let support = random_support(d.m(), k, &mut r);
            let alpha = draw_coefficients(k, lo, hi, &mut r);
            let half = k.div_ceil(2);
            let c = compose(d, &support[..half], &alpha[..half], &support[half..], &alpha[half..])?
                .with_steer_scale(cfg.steer_scale)?;
            let s = spurious_energy(d, &c, beta)?;
            Ok(Cell {
                espur: s.spurious_energy,
                ghost_energy: s.per_ghost_energy_mean,
                exceed_fraction: s.exceedances as f64 / s.ghost_count.max(1) as f64,
            })
        })
        .collect()
}

/// Scans one dictionary family at a given beta.
pub fn scan_with_beta(
    cfg: &ExperimentConfig,
    kind: DictKindConfig,
    beta: f64,
    beta_calibration: Option<BetaCalibration>,
) -> Result<PhaseScanResult> {
    cfg.validate()?;
    if !(beta >= 0.0) {
        return invalid("beta", format!("threshold must be nonnegative, got {beta}"));
    }
    let (n, m) = (cfg.n, cfg.m());
    let fixed = match cfg.scan_mode {
        ScanMode::FixedDict => Some(kind.generate(n, m, dict_seed(cfg, None))?),
        ScanMode::FreshDict => None,
    };
    let rows: Vec<Vec<Cell>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| match &fixed {
            Some(d) => run_trial(cfg, d, t, beta),
            None => run_trial(cfg, &kind.generate(n, m, dict_seed(cfg, Some(t)))?, t, beta),
        })
        .collect::<Result<_>>()?;

    let trials = cfg.trials as f64;
    let column_mean = |i: usize, f: fn(&Cell) -> f64| {
        rows.iter().map(|r| f(&r[i])).collect::<CompensatedSum>().value() / trials
    };
    let points = cfg.gamma_grid.len();
    let mean_espur: Vec<f64> = (0..points).map(|i| column_mean(i, |c| c.espur)).collect();
    let std_espur: Vec<f64> = (0..points)
        .map(|i| {
            let mu = mean_espur[i];
            let ss: CompensatedSum = rows.iter().map(|r| (r[i].espur - mu).powi(2)).collect();
            (ss.value() / (trials - 1.0)).sqrt()
        })
        .collect();
    let nonmonotone_points = (1..points)
        .filter(|&i| mean_espur[i] < mean_espur[i - 1] - 2.0 * std_espur[i].max(std_espur[i - 1]))
        .map(|i| cfg.gamma_grid[i])
        .collect();
    let mut arm_cfg = cfg.clone();
    arm_cfg.dict_kind = kind;
    arm_cfg.compare_with = None;
    Ok(PhaseScanResult {
        dict_kind: kind,
        gamma_grid: cfg.gamma_grid.clone(),
        k_grid: cfg.gamma_grid.iter().map(|&g| cfg.k_at(g)).collect(),
        gamma_star_emp: crossing(&cfg.gamma_grid, &mean_espur, cfg.threshold_eta),
        mean_espur,
        std_espur,
        mean_ghost_energy: (0..points).map(|i| column_mean(i, |c| c.ghost_energy)).collect(),
        mean_exceed_fraction: (0..points).map(|i| column_mean(i, |c| c.exceed_fraction)).collect(),
        trials_per_point: cfg.trials,
        beta,
        beta_calibration,
        threshold_eta: cfg.threshold_eta,
        nonmonotone_points,
        config: arm_cfg,
    })
}

/// Spurious-energy curve over the configured density grid, for the primary
/// dictionary family.
pub fn empirical_phase_scan(cfg: &ExperimentConfig) -> Result<PhaseScanResult> {
    cfg.validate()?;
    let (beta, cal) = resolve_beta(cfg, &calibration_dictionary(cfg, &cfg.dict_kind)?)?;
    scan_with_beta(cfg, cfg.dict_kind, beta, cal)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedScan {
    pub primary: PhaseScanResult,
    pub compare: PhaseScanResult,
    /// `gamma*_primary - gamma*_compare` when both crossings exist.
    pub delta_struct: Option<f64>,
    /// The compare arm collapses strictly earlier.
    pub compare_collapses_first: Option<bool>,
}

/// Scans the primary family and `compare` with the same seeds and the
/// primary arm's beta.
pub fn paired_phase_scan(cfg: &ExperimentConfig, compare: DictKindConfig) -> Result<PairedScan> {
    let primary = empirical_phase_scan(cfg)?;
    let compare = scan_with_beta(cfg, compare, primary.beta, primary.beta_calibration)?;
    let (delta_struct, first) = match (primary.gamma_star_emp, compare.gamma_star_emp) {
        (Some(p), Some(c)) => (Some(p - c), Some(c < p)),
        (None, Some(_)) => (None, Some(true)),
        (Some(_), None) => (None, Some(false)),
        (None, None) => (None, None),
    };
    Ok(PairedScan {
        primary,
        compare,
        delta_struct,
        compare_collapses_first: first,
    })
}

/// First density where `values` reaches `eta`, linearly interpolated between
/// the bracketing grid points; the first grid point if the curve starts there.
pub fn crossing(grid: &[f64], values: &[f64], eta: f64) -> Option<f64> {
    let i = values.iter().position(|&v| v >= eta)?;
    if i == 0 {
        return Some(grid[0]);
    }
    let (g0, g1, v0, v1) = (grid[i - 1], grid[i], values[i - 1], values[i]);
    Some(g0 + (g1 - g0) * (eta - v0) / (v1 - v0))
}

pub fn detect_transition(curve: &PhaseScanResult, eta: f64) -> Option<f64> {
    crossing(&curve.gamma_grid, &curve.mean_espur, eta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GordonCheck {
    pub width: f64,
    pub width_std_error: f64,
    /// `sqrt(m) - 1 / (2 sqrt(m))` with `m` the codimension.
    pub width_threshold: f64,
    /// Width below threshold: escape predicted.
    pub width_condition: bool,
    /// Fraction of random subspaces of dimension `n - codim` meeting the cone
    /// only at the origin.
    pub escape_rate: f64,
    pub trials: usize,
    /// Dimension-counting answer, for subspace cones.
    pub exact_escape: Option<bool>,
    /// Width prediction matches the exact rule.
    pub agrees_with_exact: Option<bool>,
    /// Width prediction matches the majority empirical outcome.
    pub agrees_with_empirical: bool,
}

/// Width samples used by [`gordon_escape_check`].
pub const GORDON_WIDTH_SAMPLES: usize = 2000;

/// Escape through a mesh: compares the width condition with empirical (and,
/// for subspaces, exact) escape of a random subspace of codimension `codim`.
pub fn gordon_escape_check(c: &ConeSpec, codim: usize, trials: usize, seed: u64) -> Result<GordonCheck> {
    let n = c.ambient_dim();
    if codim == 0 || codim >= n {
        return invalid("codim", format!("need 0 < codim < n = {n}, got {codim}"));
    }
    if trials == 0 {
        return invalid("trials", "need at least one trial");
    }
    let w = mean_width_mc(c, GORDON_WIDTH_SAMPLES, seed)?;
    let sm = (codim as f64).sqrt();
    let threshold = sm - 0.5 / sm;
    let width_condition = w.width < threshold;
    let outcomes: Vec<bool> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, &[tag::ROTATION, t]);
            let l = ConeSpec::random_subspace(n, n - codim, &mut r)?;
            Ok(!cones_meet(c, &l)?)
        })
        .collect::<Result<_>>()?;
    let escapes = outcomes.iter().filter(|&&e| e).count();
    let escape_rate = escapes as f64 / trials as f64;
    let exact_escape = match c {
        ConeSpec::Subspace { basis } => Some(basis.ncols() <= codim),
        _ => None,
    };
    Ok(GordonCheck {
        width: w.width,
        width_std_error: w.std_error,
        width_threshold: threshold,
        width_condition,
        escape_rate,
        trials,
        exact_escape,
        agrees_with_exact: exact_escape.map(|e| e == width_condition),
        agrees_with_empirical: width_condition == (escape_rate > 0.5),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicResult {
    pub probability: f64,
    pub hits: usize,
    pub trials: usize,
    /// Trials where the feasibility solve hit its iteration cap; these
    /// count as no intersection.
    pub nonconverged: usize,
}

/// Fraction of Haar rotations `Q` with `C1 and Q C2` sharing a nonzero point.
pub fn kinematic_intersection_mc(c1: &ConeSpec, c2: &ConeSpec, trials: usize, seed: u64) -> Result<KinematicResult> {
    let n = c1.ambient_dim();
    if c2.ambient_dim() != n {
        return invalid("c2", "cones live in different ambient dimensions");
    }
    let supported = matches!(c1, ConeSpec::Subspace { .. }) || matches!(c2, ConeSpec::Subspace { .. });
    if !supported {
        return invalid(
            "c2",
            format!("intersection test for {} and {} is not supported", c1.label(), c2.label()),
        );
    }
    if trials == 0 {
        return invalid("trials", "need at least one trial");
    }
    let outcomes: Vec<Option<bool>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let q = haar_orthogonal(n, &mut rng::stream(seed, &[tag::ROTATION, t]));
            match cones_meet(c1, &c2.rotated(&q)) {
                Ok(hit) => Ok(Some(hit)),
                Err(Error::NoConvergence { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let hits = outcomes.iter().filter(|o| **o == Some(true)).count();
    let nonconverged = outcomes.iter().filter(|o| o.is_none()).count();
    Ok(KinematicResult {
        probability: hits as f64 / trials as f64,
        hits,
        trials,
        nonconverged,
    })
}
