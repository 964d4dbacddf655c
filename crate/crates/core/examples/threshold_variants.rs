//! Critical density under the three threshold formulas across expansion factors.

use ghostcone::error::Result;
use ghostcone::phase::{phi_polyhedral, solve_threshold, ThresholdVariant};

fn main() -> Result<()> {
    println!("{:>7} {:>12} {:>12} {:>12}", "delta", "main_text", "appendix", "integral");
    for delta in [1.2, 1.5, 2.0, 4.0, 8.0, 16.0, 64.0] {
        let cells: Vec<String> = ThresholdVariant::ALL
            .iter()
            .map(|&v| {
                solve_threshold(v, delta).map(|s| match s.gamma_star {
                    Some(g) if s.at_domain_edge => format!("{g:.4}*"),
                    Some(g) => format!("{g:.4}"),
                    None => "-".into(),
                })
            })
            .collect::<Result<_>>()?;
        println!("{delta:>7.1} {:>12} {:>12} {:>12}", cells[0], cells[1], cells[2]);
    }
    println!("(* root on the edge of the admissible interval)");

    let s = solve_threshold(ThresholdVariant::MainText, 8.0)?;
    if let Some(why) = s.diagnostic {
        println!("\nmain_text at delta 8: {why}");
    }

    let phi = phi_polyhedral(64, 512)?;
    println!(
        "\nghost-polar dimension, N=64 n=512: main {:.2}{} appendix {:.2}{}",
        phi.variant_main,
        if phi.main_flagged { " (flagged)" } else { "" },
        phi.variant_appendix,
        if phi.appendix_flagged { " (flagged)" } else { "" },
    );
    Ok(())
}
