//! Ghost energy of a two-concept composition against its two-term prediction.

use ghostcone::dictionary::gen_spherical;
use ghostcone::error::Result;
use ghostcone::interference::{compose, empirical_ghost_energy, spurious_energy, structured_cross_term_check};

fn main() -> Result<()> {
    let n = 200;
    for (ka, kb) in [(4, 4), (10, 10), (20, 5)] {
        let g = empirical_ghost_energy(n, ka, kb, 400, 7)?;
        println!("k_A={ka:>2} k_B={kb:>2}: ghost energy {:.5} +- {:.5}  (2/n = {:.5})", g.mean, g.std_error, 2.0 / n as f64);
    }

    let d = gen_spherical(n, 800, 3)?;
    let a: Vec<usize> = (0..6).collect();
    let b: Vec<usize> = (6..12).collect();
    let c = compose(&d, &a, &[0.4; 6], &b, &[0.4; 6])?;
    let s = spurious_energy(&d, &c, 0.25)?;
    println!(
        "\nsingle instance: rho_bil {:.4}, per-ghost energy {:.5} vs prediction {:.5}, E_spur {:.4}, {} of {} ghosts above beta",
        s.rho_bil, s.per_ghost_energy_mean, s.lemma1_prediction, s.spurious_energy, s.exceedances, s.ghost_count
    );

    let x = structured_cross_term_check(n, 8, 50, 0.15, 5, 5, (0.8, 1.2), 60, 11)?;
    println!(
        "structured, same-block supports: {}/{} trials above the isotropic prediction (mean excess {:.5})",
        x.exceed_count, x.trials, x.mean_excess
    );
    Ok(())
}
