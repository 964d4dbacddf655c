//! Empirical spurious-energy curve against the predicted critical density.

use ghostcone::config::ExperimentConfig;
use ghostcone::error::Result;
use ghostcone::phase::{empirical_phase_scan, solve_threshold, ThresholdVariant};

fn main() -> Result<()> {
    let mut cfg = ExperimentConfig::new(128, 8.0);
    cfg.trials = 10;
    cfg.gamma_grid = (1..=9).map(|i| 0.1 * i as f64).collect();
    let scan = empirical_phase_scan(&cfg)?;
    println!("beta {:.4}", scan.beta);
    for i in 0..scan.gamma_grid.len() {
        println!(
            "gamma {:.2}  k {:>3}  E_spur {:.4} +- {:.4}  exceed {:.4}",
            scan.gamma_grid[i], scan.k_grid[i], scan.mean_espur[i], scan.std_espur[i], scan.mean_exceed_fraction[i]
        );
    }
    let theory = solve_threshold(ThresholdVariant::Integral, cfg.delta_dict)?;
    println!(
        "empirical crossing at eta {}: {:?}, integral prediction {:.4}",
        scan.threshold_eta,
        scan.gamma_star_emp,
        theory.gamma_star.unwrap()
    );
    Ok(())
}
