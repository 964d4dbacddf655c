//! Extreme singular values of tall Gaussian matrices and the condition number limit.

use ghostcone::error::Result;
use ghostcone::spectra::{kappa_overlay, spectra_sweep};

fn main() -> Result<()> {
    let rows = spectra_sweep(400, &[0.05, 0.1, 0.25, 0.5], 10, 4)?;
    println!("{:>6} {:>9} {:>9} {:>9} {:>9} {:>8} {:>8}", "gamma", "smin", "limit", "smax", "limit", "kappa", "theory");
    for r in &rows {
        println!(
            "{:>6.3} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>8.3} {:>8.3}",
            r.gamma, r.sigma_min_emp, r.sigma_min_limit, r.sigma_max_emp, r.sigma_max_limit, r.kappa_emp, r.kappa_theory
        );
    }
    if let Some(k) = kappa_overlay(0.2, 0.479) {
        println!("\ncondition number at gamma 0.2 rescaled by gamma* 0.479: {k:.3}");
    }
    Ok(())
}
