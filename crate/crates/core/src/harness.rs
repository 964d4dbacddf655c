//! Reproducible runs: worker pool, scan artifacts, plots and run records.
//!
//! A run writes four files into its output directory:
//!
//! | file              | content                                               |
//! |-------------------|-------------------------------------------------------|
//! | `scan.csv`        | one row per density grid point                        |
//! | `summary.json`    | empirical crossing, beta, every threshold variant     |
//! | `plot.svg`        | the curve(s) with the predicted critical density      |
//! | `run_record.json` | config, timestamps, tool version, sha256 of the above |
//!
//! Everything except the timestamps in `run_record.json` is a pure function
//! of the config, whatever the worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{BetaPolicy, DictKindConfig, ExperimentConfig};
use crate::dictionary::Dictionary;
use crate::error::{invalid, Error, Result};
use crate::gauss_tail::{gauss_tail_q, mills_bounds};
use crate::interference::{calibrate_beta, compose, draw_coefficients, random_support, spurious_energy};
use crate::phase::{empirical_phase_scan, paired_phase_scan, solve_threshold, PhaseScanResult, ThresholdSolution, ThresholdVariant};
use crate::rng::{self, tag};
use crate::spectra::kappa_overlay;

pub const THREADS_ENV: &str = "GHOSTCONE_THREADS";

pub const SCAN_CSV: &str = "scan.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const PLOT_SVG: &str = "plot.svg";
pub const RUN_RECORD_JSON: &str = "run_record.json";

/// Worker cap from `GHOSTCONE_THREADS`; `None` when unset or empty.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) if s.trim().is_empty() => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config {
                path: THREADS_ENV.into(),
                reason: format!("expected a positive integer, got {s:?}"),
            }),
        },
    }
}

/// Runs `f` inside a worker pool sized by `GHOSTCONE_THREADS`, or by the
/// machine when the variable is unset.
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config {
        path: THREADS_ENV.into(),
        reason: e.to_string(),
    })?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub dict_kind: String,
    pub beta: f64,
    pub gamma_star_emp: Option<f64>,
    /// `gamma*_primary - gamma*_compare`.
    pub delta_struct: Option<f64>,
    pub delta_struct_nonnegative: Option<bool>,
    pub compare_collapses_first: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub delta_dict: f64,
    pub dict_kind: String,
    pub beta: f64,
    pub beta_calibration_mean: Option<f64>,
    pub beta_calibration_std: Option<f64>,
    pub threshold_eta: f64,
    pub gamma_star_emp: Option<f64>,
    pub nonmonotone_points: Vec<f64>,
    pub thresholds: Vec<ThresholdSolution>,
    /// Limiting condition number at `gamma / gamma*` (integral variant),
    /// per grid point; `null` at or past the critical density.
    pub kappa_overlay: Vec<Option<f64>>,
    pub compare: Option<CompareSummary>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    /// Milliseconds since the Unix epoch.
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub tool_version: String,
    /// File name to lowercase hex sha256.
    pub digests: BTreeMap<String, String>,
}

impl RunRecord {
    /// Recomputes every digest against the files in `dir`.
    pub fn verify(&self, dir: impl AsRef<Path>) -> Result<bool> {
        for (name, digest) in &self.digests {
            if sha256_hex(&fs::read(dir.as_ref().join(name))?) != *digest {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Result of a full scan, before anything touches the disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub primary: PhaseScanResult,
    pub compare: Option<PhaseScanResult>,
    pub summary: RunSummary,
}

/// Runs the configured scan(s) and the threshold solvers.
pub fn compute(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let (primary, compare, cmp_summary) = match cfg.compare_with {
        None => (empirical_phase_scan(cfg)?, None, None),
        Some(kind) => {
            let p = paired_phase_scan(cfg, kind)?;
            let s = CompareSummary {
                dict_kind: kind.label(),
                beta: p.compare.beta,
                gamma_star_emp: p.compare.gamma_star_emp,
                delta_struct: p.delta_struct,
                delta_struct_nonnegative: p.delta_struct.map(|d| d >= 0.0),
                compare_collapses_first: p.compare_collapses_first,
            };
            (p.primary, Some(p.compare), Some(s))
        }
    };
    let thresholds = ThresholdVariant::ALL
        .iter()
        .map(|&v| solve_threshold(v, cfg.delta_dict))
        .collect::<Result<Vec<_>>>()?;
    let integral_star = thresholds
        .iter()
        .find(|t| t.variant == ThresholdVariant::Integral)
        .and_then(|t| t.gamma_star);
    let kappa = cfg
        .gamma_grid
        .iter()
        .map(|&g| integral_star.and_then(|s| kappa_overlay(g, s)))
        .collect();
    let summary = RunSummary {
        seed: cfg.seed,
        n: cfg.n,
        m: cfg.m(),
        delta_dict: cfg.delta_dict,
        dict_kind: cfg.dict_kind.label(),
        beta: primary.beta,
        beta_calibration_mean: primary.beta_calibration.map(|c| c.mean),
        beta_calibration_std: primary.beta_calibration.map(|c| c.std_dev),
        threshold_eta: cfg.threshold_eta,
        gamma_star_emp: primary.gamma_star_emp,
        nonmonotone_points: primary.nonmonotone_points.clone(),
        thresholds,
        kappa_overlay: kappa,
        compare: cmp_summary,
        config: cfg.clone(),
    };
    Ok(RunArtifacts {
        primary,
        compare,
        summary,
    })
}

/// Scan table as CSV text. Compare-arm columns appear only for paired runs.
pub fn scan_csv(primary: &PhaseScanResult, compare: Option<&PhaseScanResult>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["gamma", "k", "mean_espur", "std_espur", "trials", "mean_ghost_energy", "mean_exceed_fraction"];
    if compare.is_some() {
        header.extend(["compare_mean_espur", "compare_std_espur"]);
    }
    w.write_record(&header)?;
    for i in 0..primary.gamma_grid.len() {
        let mut row = vec![
            primary.gamma_grid[i].to_string(),
            primary.k_grid[i].to_string(),
            primary.mean_espur[i].to_string(),
            primary.std_espur[i].to_string(),
            primary.trials_per_point.to_string(),
            primary.mean_ghost_energy[i].to_string(),
            primary.mean_exceed_fraction[i].to_string(),
        ];
        if let Some(c) = compare {
            row.push(c.mean_espur[i].to_string());
            row.push(c.std_espur[i].to_string());
        }
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Tracks files written so far and deletes them unless committed.
struct OutputGuard {
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutputGuard {
    fn write(&mut self, path: PathBuf, bytes: &[u8]) -> Result<()> {
        self.written.push(path.clone());
        let mut f = fs::File::create(&path)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        Ok(())
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

/// Runs a configured experiment and writes its artifacts into `out_dir`,
/// creating the directory if needed. On failure no artifact is left behind.
pub fn run(cfg: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<RunRecord> {
    let started = now_ms();
    let dir = out_dir.as_ref();
    let art = compute(cfg)?;
    fs::create_dir_all(dir)?;

    let csv_text = scan_csv(&art.primary, art.compare.as_ref())?;
    let mut summary_text = serde_json::to_string_pretty(&art.summary)?;
    summary_text.push('\n');
    let svg = render_svg(&scan_plot(&art));

    let mut guard = OutputGuard {
        written: Vec::new(),
        committed: false,
    };
    let mut digests = BTreeMap::new();
    for (name, bytes) in [
        (SCAN_CSV, csv_text.as_bytes()),
        (SUMMARY_JSON, summary_text.as_bytes()),
        (PLOT_SVG, svg.as_bytes()),
    ] {
        guard.write(dir.join(name), bytes)?;
        digests.insert(name.to_string(), sha256_hex(bytes));
    }
    let record = RunRecord {
        config: cfg.clone(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        digests,
    };
    let mut text = serde_json::to_string_pretty(&record)?;
    text.push('\n');
    guard.write(dir.join(RUN_RECORD_JSON), text.as_bytes())?;
    guard.committed = true;
    Ok(record)
}

/// Loads a config file and runs it inside the worker pool.
pub fn run_config_file(config: impl AsRef<Path>, out_dir: impl AsRef<Path>) -> Result<RunRecord> {
    let cfg = crate::config::load_config(config)?;
    let out = out_dir.as_ref().to_path_buf();
    with_pool(|| run(&cfg, &out))?
}

// ---------------------------------------------------------------- plotting

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Symmetric error bars.
    pub err: Option<Vec<f64>>,
    pub color: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Vertical reference lines `(x, label)`.
    pub vlines: Vec<(f64, String)>,
    /// Horizontal reference lines `(y, label)`.
    pub hlines: Vec<(f64, String)>,
}

const PALETTE: [&str; 4] = ["#1f5fa8", "#c0392b", "#2e8b57", "#8e44ad"];

fn scan_plot(art: &RunArtifacts) -> PlotSpec {
    let mut series = vec![Series {
        label: art.summary.dict_kind.clone(),
        x: art.primary.gamma_grid.clone(),
        y: art.primary.mean_espur.clone(),
        err: Some(art.primary.std_espur.clone()),
        color: PALETTE[0],
    }];
    if let Some(c) = &art.compare {
        series.push(Series {
            label: c.dict_kind.label(),
            x: c.gamma_grid.clone(),
            y: c.mean_espur.clone(),
            err: Some(c.std_espur.clone()),
            color: PALETTE[1],
        });
    }
    let vlines = art
        .summary
        .thresholds
        .iter()
        .filter_map(|t| t.gamma_star.map(|g| (g, format!("{} {:.3}", t.variant.name(), g))))
        .collect();
    PlotSpec {
        title: format!("n = {}, delta = {}, {} trials", art.summary.n, art.summary.delta_dict, art.primary.trials_per_point),
        x_label: "gamma = k / n".into(),
        y_label: "spurious energy".into(),
        series,
        vlines,
        hlines: vec![(art.summary.threshold_eta, format!("eta {}", art.summary.threshold_eta))],
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders a line chart as a standalone SVG document. The x axis spans
/// `[0, 1]`; the y axis spans `[0, max(1, data max)]`.
pub fn render_svg(p: &PlotSpec) -> String {
    const W: f64 = 720.0;
    const H: f64 = 480.0;
    const L: f64 = 70.0;
    const R: f64 = 180.0;
    const T: f64 = 40.0;
    const B: f64 = 60.0;
    let (pw, ph) = (W - L - R, H - T - B);
    let y_max = p
        .series
        .iter()
        .flat_map(|s| s.y.iter().zip(s.err.iter().flatten().chain(std::iter::repeat(&0.0))).map(|(y, e)| y + e))
        .chain(p.hlines.iter().map(|h| h.0))
        .filter(|v| v.is_finite())
        .fold(1.0f64, f64::max);
    let y_top = (y_max * 10.0).ceil() / 10.0;
    let sx = |x: f64| L + x.clamp(0.0, 1.0) * pw;
    let sy = |y: f64| T + ph - (y / y_top).clamp(0.0, 1.0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, L + pw / 2.0, esc(&p.title));
    let _ = writeln!(s, r#"<rect x="{L}" y="{T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for i in 0..=10 {
        let x = i as f64 / 10.0;
        let _ = writeln!(s, r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="#888"/>"##, sx(x), T + ph, T + ph + 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x:.1}</text>"#, sx(x), T + ph + 18.0);
    }
    for i in 0..=5 {
        let y = y_top * i as f64 / 5.0;
        let _ = writeln!(s, r##"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="#ddd"/>"##, L, sy(y), L + pw);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y:.2}</text>"#, L - 6.0, sy(y) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, L + pw / 2.0, H - 18.0, esc(&p.x_label));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{0:.2}" text-anchor="middle" transform="rotate(-90 18 {0:.2})">{1}</text>"#,
        T + ph / 2.0,
        esc(&p.y_label)
    );
    for (y, label) in &p.hlines {
        let _ = writeln!(s, r##"<line x1="{0:.2}" y1="{1:.2}" x2="{2:.2}" y2="{1:.2}" stroke="#999" stroke-dasharray="2 3"/>"##, L, sy(*y), L + pw);
        let _ = writeln!(s, r##"<text x="{:.2}" y="{:.2}" fill="#666">{}</text>"##, L + pw + 6.0, sy(*y) + 4.0, esc(label));
    }
    for (i, (x, label)) in p.vlines.iter().enumerate() {
        let _ = writeln!(s, r##"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="#444" stroke-dasharray="6 4"/>"##, sx(*x), T, T + ph);
        let _ = writeln!(s, r##"<text x="{:.2}" y="{:.2}" fill="#444">{}</text>"##, L + pw + 6.0, T + ph - 16.0 * i as f64, esc(label));
    }
    for (j, ser) in p.series.iter().enumerate() {
        if let Some(err) = &ser.err {
            for ((x, y), e) in ser.x.iter().zip(&ser.y).zip(err) {
                let _ = writeln!(s, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="{3}" stroke-opacity="0.4"/>"#, sx(*x), sy(y - e), sy(y + e), ser.color);
            }
        }
        let pts: Vec<String> = ser.x.iter().zip(&ser.y).map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#, pts.join(" "), ser.color);
        for (x, y) in ser.x.iter().zip(&ser.y) {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#, sx(*x), sy(*y), ser.color);
        }
        let ly = T + 14.0 + 16.0 * j as f64;
        let _ = writeln!(s, r#"<line x1="{0:.2}" y1="{1:.2}" x2="{3:.2}" y2="{1:.2}" stroke="{2}" stroke-width="2"/>"#, L + pw + 6.0, ly - 4.0, ser.color, L + pw + 24.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, L + pw + 28.0, ly, esc(&ser.label));
    }
    s.push_str("</svg>\n");
    s
}

/// Renders a scan CSV (as written by [`run`]) to SVG, with a vertical line
/// at each `(gamma, label)` in `theory`.
pub fn plot_scan_csv(csv_path: impl AsRef<Path>, svg_path: impl AsRef<Path>, theory: &[(f64, String)]) -> Result<()> {
    let mut rdr = csv::Reader::from_path(csv_path.as_ref())?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (gi, mi) = match (col("gamma"), col("mean_espur")) {
        (Some(g), Some(m)) => (g, m),
        _ => {
            return Err(Error::Config {
                path: csv_path.as_ref().display().to_string(),
                reason: "expected `gamma` and `mean_espur` columns".into(),
            })
        }
    };
    let (si, ci, csi) = (col("std_espur"), col("compare_mean_espur"), col("compare_std_espur"));
    let mut x = Vec::new();
    let (mut y, mut e, mut cy, mut ce) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| Error::Config {
                path: format!("{}:{}:{}", csv_path.as_ref().display(), line + 2, headers.get(i).unwrap_or("?")),
                reason: "not a number".into(),
            })
        };
        x.push(num(gi)?);
        y.push(num(mi)?);
        if let Some(i) = si {
            e.push(num(i)?);
        }
        if let Some(i) = ci {
            cy.push(num(i)?);
        }
        if let Some(i) = csi {
            ce.push(num(i)?);
        }
    }
    let mut series = vec![Series {
        label: "scan".into(),
        x: x.clone(),
        y,
        err: si.map(|_| e),
        color: PALETTE[0],
    }];
    if ci.is_some() {
        series.push(Series {
            label: "compare".into(),
            x,
            y: cy,
            err: csi.map(|_| ce),
            color: PALETTE[1],
        });
    }
    let spec = PlotSpec {
        title: "spurious energy".into(),
        x_label: "gamma = k / n".into(),
        y_label: "spurious energy".into(),
        series,
        vlines: theory.to_vec(),
        hlines: Vec::new(),
    };
    fs::write(svg_path, render_svg(&spec))?;
    Ok(())
}

// ------------------------------------------------------- subcommand tables

/// `(t, Q(t), mills_lower, mills_upper)` on `points` evenly spaced values.
pub fn tailcheck_rows(t_min: f64, t_max: f64, points: usize) -> Result<Vec<[f64; 4]>> {
    if !(t_min > 0.0 && t_max >= t_min && t_max.is_finite()) {
        return invalid("t range", format!("need 0 < t_min <= t_max, got [{t_min}, {t_max}]"));
    }
    if points < 2 {
        return invalid("points", "need at least 2 points");
    }
    (0..points)
        .map(|i| {
            let t = t_min + (t_max - t_min) * i as f64 / (points - 1) as f64;
            let (lo, hi) = mills_bounds(t)?;
            Ok([t, gauss_tail_q(t)?, lo, hi])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfereRow {
    pub trial: usize,
    pub k: usize,
    pub gamma: f64,
    pub rho_bil: f64,
    pub ghost_energy_mean: f64,
    pub lemma1_pred: f64,
    pub e_spur: f64,
    pub beta: f64,
}

/// Random two-concept compositions on a fixed dictionary, one row per trial.
/// A calibrated policy measures the clean noise floor at sparsity `k_a`.
pub fn interfere_trials(
    d: &Dictionary,
    k_a: usize,
    k_b: usize,
    trials: usize,
    policy: BetaPolicy,
    coeff_range: (f64, f64),
    seed: u64,
) -> Result<Vec<InterfereRow>> {
    if k_a == 0 || k_b == 0 {
        return invalid("k_a, k_b", "both concepts need at least one atom");
    }
    if k_a + k_b >= d.m() {
        return invalid("k_a + k_b", format!("must be below m = {}", d.m()));
    }
    let beta = match policy {
        BetaPolicy::Fixed(b) => b,
        BetaPolicy::Calibrated { samples, .. } => {
            calibrate_beta(d, k_a, coeff_range, samples, rng::derive_seed(seed, &[tag::CALIBRATION]))?.beta
        }
    };
    use rayon::prelude::*;
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, &[tag::SUPPORT, t as u64]);
            let k = k_a + k_b;
            let support = random_support(d.m(), k, &mut r);
            let alpha = draw_coefficients(k, coeff_range.0, coeff_range.1, &mut r);
            let c = compose(d, &support[..k_a], &alpha[..k_a], &support[k_a..], &alpha[k_a..])?;
            let s = spurious_energy(d, &c, beta)?;
            Ok(InterfereRow {
                trial: t,
                k,
                gamma: c.gamma,
                rho_bil: c.rho_bil,
                ghost_energy_mean: s.per_ghost_energy_mean,
                lemma1_pred: s.lemma1_prediction,
                e_spur: s.spurious_energy,
                beta,
            })
        })
        .collect()
}

/// Parses `calibrated`, `calibrated:<samples>` or `fixed:<beta>`.
pub fn parse_beta_policy(s: &str) -> Result<BetaPolicy> {
    let bad = |reason: String| Error::Config {
        path: "beta-policy".into(),
        reason,
    };
    let default = BetaPolicy::default();
    match s.split_once(':') {
        None if s == "calibrated" => Ok(default),
        Some(("calibrated", v)) => match (v.parse::<usize>(), default) {
            (Ok(samples), BetaPolicy::Calibrated { clean_gamma, .. }) if samples >= 100 => Ok(BetaPolicy::Calibrated { samples, clean_gamma }),
            _ => Err(bad(format!("expected a sample count >= 100, got {v:?}"))),
        },
        Some(("fixed", v)) => match v.parse::<f64>() {
            Ok(b) if b.is_finite() && b >= 0.0 => Ok(BetaPolicy::Fixed(b)),
            _ => Err(bad(format!("expected a nonnegative number, got {v:?}"))),
        },
        _ => Err(bad(format!("expected `calibrated`, `calibrated:<samples>` or `fixed:<value>`, got {s:?}"))),
    }
}

/// Parses `spherical` or `structured` with block parameters into a
/// dictionary family.
pub fn dict_kind_from_args(kind: &str, blocks: Option<usize>, mu_local: Option<f64>) -> Result<DictKindConfig> {
    match kind {
        "spherical" => Ok(DictKindConfig::Spherical),
        "structured" => Ok(DictKindConfig::Structured {
            blocks: blocks.ok_or_else(|| Error::Config {
                path: "blocks".into(),
                reason: "required for structured dictionaries".into(),
            })?,
            mu_local: mu_local.unwrap_or(0.15),
        }),
        other => Err(Error::Config {
            path: "kind".into(),
            reason: format!("expected `spherical` or `structured`, got {other:?}"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut c = ExperimentConfig::new(32, 4.0);
        c.gamma_grid = vec![0.1, 0.3, 0.6];
        c.trials = 4;
        c.beta_policy = BetaPolicy::Calibrated {
            samples: 100,
            clean_gamma: 0.1,
        };
        c
    }

    #[test]
    fn run_writes_verified_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let rec = run(&tiny(), dir.path()).unwrap();
        for f in [SCAN_CSV, SUMMARY_JSON, PLOT_SVG, RUN_RECORD_JSON] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        assert_eq!(rec.digests.len(), 3);
        assert!(rec.verify(dir.path()).unwrap());
        fs::write(dir.path().join(SCAN_CSV), "tampered").unwrap();
        assert!(!rec.verify(dir.path()).unwrap());
    }

    #[test]
    fn csv_has_one_row_per_grid_point() {
        let art = compute(&tiny()).unwrap();
        let text = scan_csv(&art.primary, None).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("gamma,k,mean_espur,std_espur,trials"));
    }

    #[test]
    fn failed_run_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = tiny();
        c.n = 0;
        assert!(run(&c, dir.path()).is_err());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn guard_removes_written_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        {
            let mut g = OutputGuard {
                written: Vec::new(),
                committed: false,
            };
            g.write(p.clone(), b"x").unwrap();
            assert!(p.exists());
        }
        assert!(!p.exists());
    }

    #[test]
    fn svg_is_well_formed_and_escaped() {
        let spec = PlotSpec {
            title: "a < b & c".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series {
                label: "s".into(),
                x: vec![0.1, 0.5],
                y: vec![0.0, 2.0],
                err: None,
                color: PALETTE[0],
            }],
            vlines: vec![(0.4, "t".into())],
            hlines: vec![],
        };
        let svg = render_svg(&spec);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt; b &amp; c"));
        assert_eq!(svg.matches("<circle").count(), 2);
    }

    #[test]
    fn beta_policy_parsing() {
        assert!(matches!(parse_beta_policy("fixed:0.3").unwrap(), BetaPolicy::Fixed(b) if b == 0.3));
        assert!(matches!(parse_beta_policy("calibrated:150").unwrap(), BetaPolicy::Calibrated { samples: 150, .. }));
        assert!(matches!(parse_beta_policy("calibrated").unwrap(), BetaPolicy::Calibrated { .. }));
        for bad in ["fixed:-1", "fixed:x", "calibrated:50", "other"] {
            assert!(matches!(parse_beta_policy(bad), Err(Error::Config { .. })), "{bad}");
        }
    }

    #[test]
    fn tailcheck_rows_sandwich() {
        let rows = tailcheck_rows(0.5, 6.0, 12).unwrap();
        assert_eq!(rows.len(), 12);
        for [_, q, lo, hi] in rows {
            assert!(lo < q && q < hi);
        }
        assert!(tailcheck_rows(0.0, 1.0, 5).is_err());
    }
}
