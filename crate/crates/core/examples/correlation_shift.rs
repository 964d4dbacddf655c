//! Drift of a rectified unit when alignment perturbs its pre-activation variance.

use ghostcone::dictionary::{cross_correlation, gen_spherical};
use ghostcone::error::Result;
use ghostcone::gauss_tail::{jensen_ratchet_gap, rectified_drift};
use ghostcone::phase::drift_widening;

fn main() -> Result<()> {
    let (s0, mu) = (0.04, 0.05);
    println!("{:>6} {:>10} {:>10} {:>8}", "rho", "v_plus", "eta", "clipped");
    for rho in [-0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6] {
        let e = rectified_drift(s0, mu, rho)?;
        println!("{rho:>6.2} {:>10.5} {:>10.5} {:>8}", e.v_plus, e.eta, e.clipped);
    }
    for r in [0.1, 0.3, 0.5] {
        println!("symmetric gap at r={r}: {:.3e}", jensen_ratchet_gap(s0, mu, r)?);
    }

    let d = gen_spherical(64, 256, 9)?;
    let a: Vec<usize> = (0..4).collect();
    let b: Vec<usize> = (4..8).collect();
    let x = cross_correlation(&d, &a, &b, &[0.5; 4], &[0.5; 4])?;
    println!("\nrho_bil {:.4}  rho_op {:.4}", x.rho_bil, x.rho_op);
    let eta = rectified_drift(s0, mu, x.rho_bil.abs())?.eta;
    println!("widened width for k=8 from base 2.0: {:.4}", drift_widening(8, eta, 2.0)?);
    Ok(())
}
