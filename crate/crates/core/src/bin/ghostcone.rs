use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use ghostcone::cone::{statistical_dimension_mc, ConeSpec};
use ghostcone::dictionary::Dictionary;
use ghostcone::error::{Error, Result};
use ghostcone::harness::{self, with_pool};
use ghostcone::phase::{solve_threshold, ThresholdVariant};
use ghostcone::spectra::{extreme_singular_values_mc, spectra_sweep, SpectraResult};

#[derive(Parser)]
#[command(name = "ghostcone", version, about = "Superposition interference and cone-geometry simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a unit-norm dictionary and save it.
    GenDict {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long, default_value = "spherical")]
        kind: String,
        #[arg(long)]
        blocks: Option<usize>,
        #[arg(long)]
        mu_local: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-trial interference statistics of random two-concept compositions.
    Interfere {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long)]
        ka: usize,
        #[arg(long)]
        kb: usize,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// `calibrated`, `calibrated:<samples>` or `fixed:<beta>`.
        #[arg(long, default_value = "calibrated")]
        beta_policy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; stdout when absent.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Monte Carlo statistical dimension of a cone.
    Statdim {
        /// `subspace:<k>`, `ray`, `orthant` or `gens:<dictfile>:<k>`.
        #[arg(long)]
        cone: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Critical density for a dictionary expansion factor.
    Threshold {
        #[arg(long)]
        delta: f64,
        /// `integral`, `main_text`, `appendix` or `all`.
        #[arg(long, default_value = "integral")]
        variant: String,
    },
    /// Run a configured phase scan and write its artifacts.
    PhaseScan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extreme singular values of tall Gaussian matrices.
    Spectra {
        #[arg(long)]
        n: usize,
        /// One density, or a comma-separated list with `--sweep`.
        #[arg(long, value_delimiter = ',', default_value = "0.25")]
        gamma: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write a CSV over every `--gamma` value to this file.
        #[arg(long)]
        sweep: Option<PathBuf>,
    },
    /// Gaussian tail and its Mills-ratio bounds as CSV.
    Tailcheck {
        #[arg(long, default_value_t = 0.5)]
        t_min: f64,
        #[arg(long, default_value_t = 6.0)]
        t_max: f64,
        #[arg(long, default_value_t = 500)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a scan CSV to SVG.
    Plot {
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        svg: PathBuf,
        /// Critical density line(s); defaults to those in a sibling
        /// `summary.json`.
        #[arg(long)]
        theory: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match with_pool(|| dispatch(cli.cmd)).and_then(|r| r) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::InvalidArgument { .. } | Error::Format(_) | Error::Json(_) => 2,
        Error::NoConvergence { .. } => 3,
        Error::Io(_) | Error::Csv(_) => 1,
    }
}

fn config_err(path: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        path: path.into(),
        reason: reason.into(),
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn print_json(v: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::GenDict {
            n,
            m,
            kind,
            blocks,
            mu_local,
            seed,
            out,
        } => {
            let kind = harness::dict_kind_from_args(&kind, blocks, mu_local)?;
            let d = kind.generate(n, m, seed)?;
            d.save(&out)?;
            print_json(&json!({
                "path": out.display().to_string(),
                "n": d.n(),
                "m": d.m(),
                "kind": kind.label(),
                "seed": seed,
            }))
        }
        Cmd::Interfere {
            dict,
            ka,
            kb,
            trials,
            beta_policy,
            seed,
            csv,
        } => {
            let d = Dictionary::load(&dict)?;
            let policy = harness::parse_beta_policy(&beta_policy)?;
            let rows = harness::interfere_trials(&d, ka, kb, trials, policy, (0.8, 1.2), seed)?;
            let mut w = csv::Writer::from_writer(sink(csv.as_deref())?);
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
            Ok(())
        }
        Cmd::Statdim { cone, n, samples, seed } => {
            let c = parse_cone(&cone, n)?;
            let est = statistical_dimension_mc(&c, samples, seed)?;
            print_json(&json!({
                "cone": c.label(),
                "n": c.ambient_dim(),
                "samples": est.samples,
                "mean": est.mean,
                "se": est.std_error,
                "normalized": est.normalized,
            }))
        }
        Cmd::Threshold { delta, variant } => {
            if variant == "all" {
                let all = ThresholdVariant::ALL
                    .iter()
                    .map(|&v| solve_threshold(v, delta))
                    .collect::<Result<Vec<_>>>()?;
                print_json(&all)
            } else {
                let v: ThresholdVariant = variant.parse()?;
                print_json(&solve_threshold(v, delta)?)
            }
        }
        Cmd::PhaseScan { config, out } => {
            let cfg = ghostcone::config::load_config(&config)?;
            let rec = harness::run(&cfg, &out)?;
            print_json(&rec.digests)
        }
        Cmd::Spectra {
            n,
            gamma,
            trials,
            seed,
            sweep,
        } => match sweep {
            Some(path) => {
                let rows = spectra_sweep(n, &gamma, trials, seed)?;
                let mut w = csv::Writer::from_path(path)?;
                for r in rows {
                    w.serialize(r)?;
                }
                w.flush()?;
                Ok(())
            }
            None => {
                if gamma.len() != 1 {
                    return Err(config_err("gamma", "several densities need --sweep <csv>"));
                }
                let r: SpectraResult = extreme_singular_values_mc(n, gamma[0], trials, seed)?;
                print_json(&r)
            }
        },
        Cmd::Tailcheck { t_min, t_max, points, out } => {
            let rows = harness::tailcheck_rows(t_min, t_max, points)?;
            let mut w = csv::Writer::from_writer(sink(out.as_deref())?);
            w.write_record(["t", "Q", "mills_lower", "mills_upper"])?;
            for r in rows {
                w.write_record(r.iter().map(|v| v.to_string()))?;
            }
            w.flush()?;
            Ok(())
        }
        Cmd::Plot { csv, svg, theory } => {
            let lines = if theory.is_empty() {
                sibling_theory_lines(&csv)?
            } else {
                theory.iter().map(|&g| (g, format!("theory {g:.3}"))).collect()
            };
            harness::plot_scan_csv(&csv, &svg, &lines)
        }
    }
}

/// Threshold lines from a `summary.json` next to the CSV, if there is one.
fn sibling_theory_lines(csv: &Path) -> Result<Vec<(f64, String)>> {
    let path = csv.with_file_name(harness::SUMMARY_JSON);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let s: harness::RunSummary = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(s.thresholds
        .iter()
        .filter_map(|t| t.gamma_star.map(|g| (g, format!("{} {g:.3}", t.variant.name()))))
        .collect())
}

fn parse_cone(spec: &str, n: Option<usize>) -> Result<ConeSpec> {
    let need_n = || n.ok_or_else(|| config_err("n", format!("required for cone {spec:?}")));
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str, field: &str| s.parse::<usize>().map_err(|_| config_err(field, format!("expected a count, got {s:?}")));
    match parts.as_slice() {
        ["subspace", k] => ConeSpec::coordinate_subspace(need_n()?, num(k, "cone.k")?),
        ["ray"] => {
            let n = need_n()?;
            ConeSpec::ray(nalgebra::DVector::from_fn(n, |i, _| if i == 0 { 1.0 } else { 0.0 }))
        }
        ["orthant"] => ConeSpec::orthant(need_n()?),
        ["gens", file, k] => {
            let d = Dictionary::load(file)?;
            if n.is_some_and(|n| n != d.n()) {
                return Err(config_err("n", format!("dictionary has n = {}", d.n())));
            }
            ConeSpec::from_atoms(&d, num(k, "cone.k")?)
        }
        _ => Err(config_err(
            "cone",
            format!("expected subspace:<k>, ray, orthant or gens:<dictfile>:<k>, got {spec:?}"),
        )),
    }
}
