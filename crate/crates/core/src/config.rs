//! Experiment configuration: the reproducibility contract of a scan.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dictionary::{gen_spherical, gen_structured, Dictionary, MAX_ATOMS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DictKindConfig {
    #[default]
    Spherical,
    Structured { blocks: usize, mu_local: f64 },
}

impl DictKindConfig {
    pub fn generate(&self, n: usize, m: usize, seed: u64) -> Result<Dictionary> {
        match *self {
            DictKindConfig::Spherical => gen_spherical(n, m, seed),
            DictKindConfig::Structured { blocks, mu_local } => {
                if blocks == 0 || !m.is_multiple_of(blocks) {
                    return Err(Error::Config {
                        path: "dict_kind.structured.blocks".into(),
                        reason: format!("{blocks} blocks do not divide m = {m}"),
                    });
                }
                gen_structured(n, blocks, m / blocks, mu_local, seed)
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            DictKindConfig::Spherical => "spherical".into(),
            DictKindConfig::Structured { blocks, mu_local } => {
                format!("structured(blocks={blocks}, mu_local={mu_local})")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaPolicy {
    /// `beta = mean + 3 std` of ghost pre-activations of clean compositions
    /// with `round(clean_gamma n)` atoms, over `samples` compositions.
    Calibrated {
        #[serde(default = "default_calibration_samples")]
        samples: usize,
        #[serde(default = "default_clean_gamma")]
        clean_gamma: f64,
    },
    Fixed(f64),
}

fn default_calibration_samples() -> usize {
    200
}

fn default_clean_gamma() -> f64 {
    0.2
}

impl Default for BetaPolicy {
    fn default() -> Self {
        BetaPolicy::Calibrated {
            samples: default_calibration_samples(),
            clean_gamma: default_clean_gamma(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    /// A new dictionary per trial, shared across the grid within the trial.
    #[default]
    FreshDict,
    /// One dictionary for the whole scan; only supports and coefficients vary.
    FixedDict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    /// Overcompleteness; the atom count is `round(delta_dict n)`.
    pub delta_dict: f64,
    #[serde(default = "default_gamma_grid")]
    pub gamma_grid: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dict_kind: DictKindConfig,
    #[serde(default)]
    pub beta_policy: BetaPolicy,
    #[serde(default = "default_coeff_range")]
    pub coeff_range: (f64, f64),
    #[serde(default)]
    pub scan_mode: ScanMode,
    #[serde(default = "default_steer_scale")]
    pub steer_scale: f64,
    /// Collapse threshold on mean spurious energy.
    #[serde(default = "default_eta")]
    pub threshold_eta: f64,
    /// Optional second dictionary family scanned with the same seeds and the
    /// primary arm's beta, for the correlation shift.
    #[serde(default)]
    pub compare_with: Option<DictKindConfig>,
}

/// `0.05, 0.10, ..., 0.90`, built from integers so the values are exact
/// decimal roundings.
pub fn default_gamma_grid() -> Vec<f64> {
    (1..=18).map(|i| i as f64 * 5.0 / 100.0).collect()
}

fn default_trials() -> usize {
    50
}

fn default_coeff_range() -> (f64, f64) {
    (0.8, 1.2)
}

fn default_steer_scale() -> f64 {
    1.0
}

fn default_eta() -> f64 {
    0.1
}

/// One failed constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub path: String,
    pub reason: String,
}

impl ExperimentConfig {
    /// Config with every optional field at its default.
    pub fn new(n: usize, delta_dict: f64) -> Self {
        ExperimentConfig {
            n,
            delta_dict,
            gamma_grid: default_gamma_grid(),
            trials: default_trials(),
            seed: 0,
            dict_kind: DictKindConfig::default(),
            beta_policy: BetaPolicy::default(),
            coeff_range: default_coeff_range(),
            scan_mode: ScanMode::default(),
            steer_scale: default_steer_scale(),
            threshold_eta: default_eta(),
            compare_with: None,
        }
    }

    pub fn m(&self) -> usize {
        (self.delta_dict * self.n as f64).round() as usize
    }

    /// Active count at density `gamma`.
    pub fn k_at(&self, gamma: f64) -> usize {
        (gamma * self.n as f64).round() as usize
    }

    /// Every violated constraint, in field order.
    pub fn issues(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut bad = |path: String, reason: String| out.push(ConfigIssue { path, reason });

        if self.n < 32 {
            bad("n".into(), format!("must be at least 32, got {}", self.n));
        }
        let delta_ok = self.delta_dict.is_finite() && self.delta_dict > 1.0;
        if !delta_ok {
            bad("delta_dict".into(), format!("must exceed 1, got {}", self.delta_dict));
        }
        let m = if delta_ok { self.m() } else { 0 };
        if delta_ok && m > MAX_ATOMS {
            bad("delta_dict".into(), format!("m = {m} exceeds the limit of {MAX_ATOMS} atoms"));
        }
        if self.gamma_grid.is_empty() {
            bad("gamma_grid".into(), "must contain at least one density".into());
        }
        for (i, &g) in self.gamma_grid.iter().enumerate() {
            if !(g > 0.0 && g < 1.0) {
                bad(format!("gamma_grid[{i}]"), format!("{g} out of (0,1)"));
                continue;
            }
            if i > 0 && !(g > self.gamma_grid[i - 1]) {
                bad(format!("gamma_grid[{i}]"), "grid must be strictly ascending".into());
            }
            let k = self.k_at(g);
            if self.n >= 32 && k == 0 {
                bad(format!("gamma_grid[{i}]"), format!("round({g} * n) = 0 active atoms"));
            }
        }
        if self.trials < 2 {
            bad("trials".into(), format!("must be at least 2, got {}", self.trials));
        }
        let (lo, hi) = self.coeff_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            bad("coeff_range".into(), format!("need 0 < low <= high, got ({lo}, {hi})"));
        }
        if !(self.steer_scale.is_finite() && self.steer_scale > 0.0) {
            bad("steer_scale".into(), format!("must be positive, got {}", self.steer_scale));
        }
        if !(self.threshold_eta.is_finite() && self.threshold_eta > 0.0) {
            bad("threshold_eta".into(), format!("must be positive, got {}", self.threshold_eta));
        }
        match self.beta_policy {
            BetaPolicy::Calibrated { samples, clean_gamma } => {
                if samples < 100 {
                    bad("beta_policy.calibrated.samples".into(), format!("must be at least 100, got {samples}"));
                }
                if !(clean_gamma > 0.0 && clean_gamma < 1.0) {
                    bad("beta_policy.calibrated.clean_gamma".into(), format!("{clean_gamma} out of (0,1)"));
                } else if self.n >= 32 && self.k_at(clean_gamma) == 0 {
                    bad("beta_policy.calibrated.clean_gamma".into(), "rounds to zero active atoms".into());
                }
            }
            BetaPolicy::Fixed(b) => {
                if !(b >= 0.0) || b.is_nan() {
                    bad("beta_policy.fixed".into(), format!("must be a nonnegative number, got {b}"));
                }
            }
        }
        for (prefix, kind) in [("dict_kind", Some(&self.dict_kind)), ("compare_with", self.compare_with.as_ref())] {
            if let Some(DictKindConfig::Structured { blocks, mu_local }) = kind {
                if *blocks == 0 || (m > 0 && m % blocks != 0) {
                    bad(format!("{prefix}.structured.blocks"), format!("{blocks} blocks do not divide m = {m}"));
                }
                if !(*mu_local > 0.0 && *mu_local < 1.0) {
                    bad(format!("{prefix}.structured.mu_local"), format!("{mu_local} out of (0,1)"));
                }
            }
        }
        out
    }

    /// Fails with the first violated constraint; the message counts the rest.
    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        match issues.first() {
            None => Ok(()),
            Some(first) => {
                let more = issues.len() - 1;
                let reason = if more == 0 {
                    first.reason.clone()
                } else {
                    let rest: Vec<String> = issues[1..].iter().map(|i| format!("{}: {}", i.path, i.reason)).collect();
                    format!("{} (also: {})", first.reason, rest.join("; "))
                };
                Err(Error::Config {
                    path: first.path.clone(),
                    reason,
                })
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config {
            path: json_error_path(&e),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn json_error_path(e: &serde_json::Error) -> String {
    // serde reports unknown or missing fields inside the message text.
    let msg = e.to_string();
    for marker in ["unknown field `", "missing field `"] {
        if let Some(start) = msg.find(marker) {
            let rest = &msg[start + marker.len()..];
            if let Some(end) = rest.find('`') {
                return rest[..end].to_string();
            }
        }
    }
    "<root>".into()
}

/// Reads, fills defaults and validates a JSON config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    ExperimentConfig::from_json(&text)
}
