//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test --test acceptance -- 4 12`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use ghostcone::cone::{moreau_check, statistical_dimension_mc, ConeSpec};
use ghostcone::config::{DictKindConfig, ExperimentConfig};
use ghostcone::gauss_tail::{gauss_tail_q, mills_bounds, rectified_mean, rectified_tail_second_moment};
use ghostcone::interference::{empirical_ghost_energy, structured_cross_term_check};
use ghostcone::phase::{
    empirical_phase_scan, gordon_escape_check, kinematic_intersection_mc, paired_phase_scan, solve_threshold, threshold_boundary,
    ThresholdVariant, ROOT_TOL,
};
use ghostcone::rng;
use ghostcone::spectra::extreme_singular_values_mc;
use ghostcone_oracles as oracle;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian(n: usize, r: &mut impl Rng) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| r.sample::<f64, _>(StandardNormal)))
}

fn c1_sphere_identity() -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (i, n) in [32usize, 64, 128, 256].into_iter().enumerate() {
        let g = empirical_ghost_energy(n, 1, 0, 10_000, 100 + i as u64).map_err(|e| e.to_string())?;
        let z = (g.mean - 1.0 / n as f64).abs() / g.std_error;
        worst = worst.max(z);
        parts.push(format!("n={n}: {:.3e} vs {:.3e} ({z:.2} SE)", g.mean, 1.0 / n as f64));
    }
    check(worst <= 4.0, parts.join("; "))
}

fn c2_cross_term() -> Outcome {
    let r = structured_cross_term_check(256, 16, 128, 0.15, 4, 4, (0.8, 1.2), 200, 7).map_err(|e| e.to_string())?;
    let frac = r.exceed_count as f64 / r.trials as f64;
    check(
        frac >= 0.95,
        format!("{}/{} trials above the isotropic prediction ({:.1}%), mean excess {:.4}", r.exceed_count, r.trials, 100.0 * frac, r.mean_excess),
    )
}

fn c3_rectified_moments() -> Outcome {
    const N: usize = 1_000_000;
    let mut worst_z = 0.0f64;
    for (i, sigma) in [0.1, 0.5, 1.0, 2.0].into_iter().enumerate() {
        let mut r = rng::stream(3, &[i as u64]);
        let xs: Vec<f64> = (0..N).map(|_| (sigma * r.sample::<f64, _>(StandardNormal)).max(0.0)).collect();
        let mean = xs.iter().sum::<f64>() / N as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (N - 1) as f64;
        let exact = rectified_mean(sigma).map_err(|e| e.to_string())?;
        worst_z = worst_z.max((mean - exact).abs() / (var / N as f64).sqrt());
    }
    let mut worst_rel = 0.0f64;
    for i in 0..10 {
        for j in 0..10 {
            let beta = 0.5 * i as f64;
            let zeta = 0.25 * (j + 1) as f64;
            let got = rectified_tail_second_moment(beta, zeta).map_err(|e| e.to_string())?;
            let want = oracle::rectified_tail_m2(beta, zeta);
            worst_rel = worst_rel.max((got - want).abs() / want);
        }
    }
    check(
        worst_z <= 4.0 && worst_rel <= 1e-8,
        format!("rectified mean worst {worst_z:.2} SE at 1e6 samples; tail second moment worst relative error {worst_rel:.2e} on 10x10 grid"),
    )
}

fn c4_mills() -> Outcome {
    let mut bad = 0;
    for i in 0..500 {
        let t = 0.5 + 5.5 * i as f64 / 499.0;
        let (lo, hi) = mills_bounds(t).map_err(|e| e.to_string())?;
        let q = gauss_tail_q(t).map_err(|e| e.to_string())?;
        let q_quad = oracle::tail_q(t);
        if !(lo < q && q < hi && lo < q_quad && q_quad < hi) {
            bad += 1;
        }
    }
    check(bad == 0, format!("{bad} of 500 points on [0.5, 6] violate the strict sandwich"))
}

fn c5_statdim() -> Outcome {
    let mut r = rng::stream(5, &[]);
    let dir = gaussian(128, &mut r);
    let cases: Vec<(ConeSpec, f64)> = vec![
        (ConeSpec::random_subspace(64, 10, &mut r).unwrap(), 10.0),
        (ConeSpec::random_subspace(128, 32, &mut r).unwrap(), 32.0),
        (ConeSpec::ray(dir).unwrap(), 0.5),
        (ConeSpec::orthant(16).unwrap(), 8.0),
        (ConeSpec::orthant(128).unwrap(), 64.0),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (i, (c, want)) in cases.iter().enumerate() {
        let e = statistical_dimension_mc(c, 10_000, 50 + i as u64).map_err(|e| e.to_string())?;
        let z = (e.mean - want).abs() / e.std_error;
        ok &= z <= 4.0;
        parts.push(format!("{} {:.3} vs {want} ({z:.2} SE)", c.label(), e.mean));
    }
    let g = ConeSpec::random_generators(128, 8, 9).map_err(|e| e.to_string())?;
    let e = statistical_dimension_mc(&g, 10_000, 59).map_err(|e| e.to_string())?;
    let rel = (e.mean - 4.0).abs() / 4.0;
    ok &= rel <= 0.15;
    parts.push(format!("gens k=8 n=128 {:.3} vs 4 ({:.1}%)", e.mean, 100.0 * rel));
    check(ok, parts.join("; "))
}

fn c6_moreau() -> Outcome {
    let mut r = rng::stream(6, &[]);
    let dir = gaussian(64, &mut r);
    let cones = [
        ConeSpec::random_subspace(64, 20, &mut r).unwrap(),
        ConeSpec::ray(dir).unwrap(),
        ConeSpec::orthant(64).unwrap(),
        ConeSpec::random_generators(64, 8, 1).unwrap(),
        ConeSpec::random_generators(32, 48, 2).unwrap(),
    ];
    let mut worst = 0.0f64;
    for (ci, c) in cones.iter().enumerate() {
        let mut r = rng::stream(60, &[ci as u64]);
        for _ in 0..1000 {
            let m = moreau_check(c, &gaussian(c.ambient_dim(), &mut r)).map_err(|e| e.to_string())?;
            worst = worst.max(m.pythagoras_error);
        }
    }
    check(worst <= 1e-8, format!("worst relative Pythagoras error {worst:.2e} over 1000 draws x 5 cones"))
}

fn c7_kinematic() -> Outcome {
    let pairs = [(10, 3, 8), (10, 3, 7), (10, 5, 5), (10, 5, 6), (16, 8, 9), (16, 8, 8), (20, 1, 19), (20, 2, 19), (32, 16, 17), (32, 10, 12)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, &(n, d1, d2)) in pairs.iter().enumerate() {
        let a = ConeSpec::coordinate_subspace(n, d1).unwrap();
        let b = ConeSpec::coordinate_subspace(n, d2).unwrap();
        let k = kinematic_intersection_mc(&a, &b, 100, 70 + i as u64).map_err(|e| e.to_string())?;
        let want = if d1 + d2 > n { 1.0 } else { 0.0 };
        ok &= k.probability == want;
        parts.push(format!("({n},{d1},{d2})={}", k.probability));
    }
    let trials = 400;
    let orthant = ConeSpec::orthant(16).unwrap();
    let mut sweep = Vec::new();
    let mut oracle_ok = true;
    for d in 1..16u64 {
        let s = ConeSpec::coordinate_subspace(16, d as usize).unwrap();
        let k = kinematic_intersection_mc(&orthant, &s, trials, 700 + d).map_err(|e| e.to_string())?;
        let p = oracle::orthant_subspace_intersection(16, d);
        let se = (p * (1.0 - p) / trials as f64).sqrt().max(1.0 / trials as f64);
        oracle_ok &= (k.probability - p).abs() <= 4.0 * se && k.nonconverged == 0;
        sweep.push(k.probability);
    }
    let below = sweep[5] < 0.5;
    let above = sweep[9] > 0.5;
    ok &= oracle_ok && below && above;
    let curve: Vec<String> = sweep.iter().enumerate().map(|(i, p)| format!("{}:{p:.3}", i + 1)).collect();
    parts.push(format!("orthant n=16 sweep [{}]", curve.join(" ")));
    check(ok, parts.join("; "))
}

fn c8_bai_yin() -> Outcome {
    let r = extreme_singular_values_mc(1024, 0.25, 20, 8).map_err(|e| e.to_string())?;
    let ok = (1.45..=1.55).contains(&r.sigma_max_emp)
        && (0.45..=0.55).contains(&r.sigma_min_emp)
        && (r.kappa_emp - 3.0).abs() <= 0.3;
    check(ok, format!("sigma_max {:.4}, sigma_min {:.4}, kappa {:.4}", r.sigma_max_emp, r.sigma_min_emp, r.kappa_emp))
}

fn c9_phase_scan() -> Outcome {
    let cfg = ExperimentConfig::new(512, 8.0);
    let s = empirical_phase_scan(&cfg).map_err(|e| e.to_string())?;
    let low_ok = s.gamma_grid.iter().zip(&s.mean_espur).filter(|(g, _)| **g <= 0.2 + 1e-12).all(|(_, e)| *e <= 0.15);
    let high_ok = s.gamma_grid.iter().zip(&s.mean_espur).filter(|(g, _)| **g >= 0.7 - 1e-12).all(|(_, e)| *e >= 0.7);
    let star_ok = s.gamma_star_emp.is_some_and(|g| (0.25..=0.55).contains(&g));
    let curve: Vec<String> = s.gamma_grid.iter().zip(&s.mean_espur).map(|(g, e)| format!("{g:.2}:{e:.3}")).collect();
    check(
        low_ok && high_ok && star_ok,
        format!(
            "plateau<=0.15 {low_ok}, rise>=0.7 {high_ok}, gamma*_emp {:?} in [0.25,0.55] {star_ok}, beta {:.4}; curve [{}]",
            s.gamma_star_emp,
            s.beta,
            curve.join(" ")
        ),
    )
}

fn c10_correlation_shift() -> Outcome {
    let structured = DictKindConfig::Structured { blocks: 64, mu_local: 0.15 };
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 0..10u64 {
        let mut cfg = ExperimentConfig::new(512, 8.0);
        cfg.seed = 1000 + seed;
        let p = paired_phase_scan(&cfg, structured).map_err(|e| e.to_string())?;
        if p.compare_collapses_first == Some(true) {
            wins += 1;
        }
        parts.push(format!(
            "{:?}/{:?}",
            p.primary.gamma_star_emp.map(|g| (g * 1000.0).round() / 1000.0),
            p.compare.gamma_star_emp.map(|g| (g * 1000.0).round() / 1000.0)
        ));
    }
    check(wins >= 8, format!("structured collapses first in {wins}/10 pairs (sph/struct: {})", parts.join(" ")))
}

fn c11_gordon() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, &(n, d, codim)) in [(64, 9, 10), (64, 11, 10), (64, 19, 20), (64, 21, 20)].iter().enumerate() {
        let c = ConeSpec::coordinate_subspace(n, d).unwrap();
        let g = gordon_escape_check(&c, codim, 100, 110 + i as u64).map_err(|e| e.to_string())?;
        let exact = d <= codim;
        let empirical_matches = if exact { g.escape_rate == 1.0 } else { g.escape_rate == 0.0 };
        let width_oracle = oracle::chi_mean(d);
        let width_ok = (g.width - width_oracle).abs() <= 4.0 * g.width_std_error;
        ok &= g.agrees_with_exact == Some(true) && empirical_matches && width_ok;
        parts.push(format!("subspace d={d} codim={codim}: width {:.3} (chi {width_oracle:.3}) escape {}", g.width, g.escape_rate));
    }
    let mut r = rng::stream(11, &[]);
    let ray = ConeSpec::ray(gaussian(64, &mut r)).unwrap();
    let g = gordon_escape_check(&ray, 10, 200, 119).map_err(|e| e.to_string())?;
    ok &= g.width_condition && g.escape_rate >= 0.99;
    parts.push(format!("ray codim=10: width {:.3} < {:.3}, escape {}", g.width, g.width_threshold, g.escape_rate));
    check(ok, parts.join("; "))
}

fn c12_threshold_solvers() -> Outcome {
    let mut solved = 0;
    let mut problems = Vec::new();
    for i in 0..60 {
        let delta = 1.05 * (64.0f64 / 1.05).powf(i as f64 / 59.0);
        for v in ThresholdVariant::ALL {
            let s = solve_threshold(v, delta).map_err(|e| e.to_string())?;
            if let Some(g) = s.gamma_star {
                solved += 1;
                let direct = threshold_boundary(v, delta, g).abs();
                let bracket_ok = matches!((s.bracket, s.bracket_values), (Some((a, b)), Some((fa, fb))) if a <= g && g <= b && (fa * fb <= 0.0));
                if !(s.residual.is_some_and(|r| r <= ROOT_TOL) && direct <= ROOT_TOL && bracket_ok) {
                    problems.push(format!("{} at delta {delta:.4}", v.name()));
                }
            }
        }
    }
    let m = solve_threshold(ThresholdVariant::MainText, 8.0).map_err(|e| e.to_string())?;
    let main_ok = m.gamma_star.is_none() && m.diagnostic.is_some();
    check(
        problems.is_empty() && main_ok,
        format!(
            "{solved} roots on 60 deltas x 3 variants, {} without residual/bracket; main text at delta 8: {}",
            problems.len(),
            m.diagnostic.unwrap_or_else(|| "returned a root".into())
        ),
    )
}

fn cli(args: &[&str], threads: &str, dir: &Path) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_ghostcone"))
        .args(args)
        .current_dir(dir)
        .env("GHOSTCONE_THREADS", threads)
        .output()
        .expect("spawn ghostcone");
    assert!(out.status.success(), "ghostcone {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn c13_determinism() -> Outcome {
    let base = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = r#"{"n": 128, "delta_dict": 4, "trials": 12, "seed": 77,
                  "gamma_grid": [0.1, 0.3, 0.5, 0.7],
                  "compare_with": {"structured": {"blocks": 16, "mu_local": 0.15}}}"#;
    std::fs::write(base.path().join("cfg.json"), cfg).map_err(|e| e.to_string())?;
    let mut runs: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for (i, threads) in ["1", "1", "3"].iter().enumerate() {
        let dir = base.path();
        let out = format!("run{i}");
        let dict = format!("d{i}.gcdx");
        let mut files = vec![
            ("threshold".to_string(), cli(&["threshold", "--delta", "8", "--variant", "all"], threads, dir)),
            ("tailcheck".into(), cli(&["tailcheck", "--points", "50"], threads, dir)),
            ("spectra".into(), cli(&["spectra", "--n", "200", "--gamma", "0.25", "--trials", "6", "--seed", "4"], threads, dir)),
            ("gen-dict".into(), cli(&["gen-dict", "--n", "64", "--m", "256", "--seed", "5", "--out", &dict], threads, dir)),
            ("statdim".into(), cli(&["statdim", "--cone", &format!("gens:{dict}:6"), "--samples", "300", "--seed", "2"], threads, dir)),
            ("interfere".into(), cli(&["interfere", "--dict", &dict, "--ka", "3", "--kb", "4", "--trials", "20", "--seed", "9"], threads, dir)),
        ];
        cli(&["phase-scan", "--config", "cfg.json", "--out", &out], threads, dir);
        for name in [&dict, &format!("{out}/scan.csv"), &format!("{out}/summary.json"), &format!("{out}/plot.svg")] {
            let bytes = std::fs::read(dir.join(name)).map_err(|e| e.to_string())?;
            files.push((name.replace(&i.to_string(), "#"), bytes));
        }
        files.retain(|(n, _)| n != "gen-dict");
        runs.push(files);
    }
    let mut diffs = Vec::new();
    for (i, (name, bytes)) in runs[0].iter().enumerate() {
        for run in &runs[1..] {
            if run[i].1 != *bytes {
                diffs.push(name.clone());
            }
        }
    }
    diffs.dedup();
    check(
        diffs.is_empty(),
        format!("{} outputs compared across 3 runs (threads 1, 1, 3); differing: {diffs:?}", runs[0].len()),
    )
}

const CRITERIA: [(&str, fn() -> Outcome); 13] = [
    ("sphere identity", c1_sphere_identity),
    ("cross term", c2_cross_term),
    ("rectified moments", c3_rectified_moments),
    ("Mills sandwich", c4_mills),
    ("statistical dimension oracles", c5_statdim),
    ("Moreau/Pythagoras", c6_moreau),
    ("kinematic subspace law", c7_kinematic),
    ("Bai-Yin extremes", c8_bai_yin),
    ("phase-scan shape", c9_phase_scan),
    ("correlation shift", c10_correlation_shift),
    ("Gordon width condition", c11_gordon),
    ("threshold solvers", c12_threshold_solvers),
    ("determinism", c13_determinism),
];

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (i, (name, f)) in CRITERIA.iter().enumerate() {
        let id = i + 1;
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS criterion {id:>2} ({name}, {secs:.1}s): {d}"),
            Err(d) => {
                println!("FAIL criterion {id:>2} ({name}, {secs:.1}s): {d}");
                failed.push(id);
            }
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}

