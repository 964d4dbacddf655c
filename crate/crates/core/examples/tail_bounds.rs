//! Gaussian tail, its Mills-ratio bracket, and the rectified tail moment.

use ghostcone::error::Result;
use ghostcone::gauss_tail::{
    exceedance_sensitivity, gauss_tail_q, mills_bounds, rectified_tail_second_moment, tail_moment_expansion,
};

fn main() -> Result<()> {
    println!("{:>5} {:>12} {:>12} {:>12}", "t", "lower", "Q(t)", "upper");
    for t in [1.0, 2.0, 3.0, 4.0, 6.0] {
        let (lo, hi) = mills_bounds(t)?;
        println!("{t:>5.1} {lo:>12.4e} {:>12.4e} {hi:>12.4e}", gauss_tail_q(t)?);
    }

    println!("\nrectified tail second moment, zeta = 1");
    for beta in [1.0, 3.0, 6.0, 12.0] {
        let exact = rectified_tail_second_moment(beta, 1.0)?;
        let lead = tail_moment_expansion(beta, 1.0)?;
        println!("beta {beta:>4.1}: exact {exact:.6e}  leading term {lead:.6e}  ratio {:.3}", lead / exact);
    }

    let r = exceedance_sensitivity(3.0, 1.0, 0.05, 0.5)?;
    println!(
        "\nexceedance ratio at beta 3, mu 0.05, rho 0.5: approx {:.4}, exact {:.4}",
        r.approx_ratio, r.exact_ratio
    );
    Ok(())
}
