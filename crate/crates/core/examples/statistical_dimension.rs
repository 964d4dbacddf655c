//! Statistical dimension, Gaussian width and escape through a mesh.

use ghostcone::cone::{mean_width_mc, polar_statdim_mc, polytope_width_sq, statistical_dimension_mc, ConeSpec};
use ghostcone::error::Result;
use ghostcone::phase::gordon_escape_check;

fn main() -> Result<()> {
    let n = 40;
    for (name, c) in [
        ("subspace d=10", ConeSpec::coordinate_subspace(n, 10)?),
        ("orthant", ConeSpec::orthant(n)?),
        ("20 random generators", ConeSpec::random_generators(n, 20, 5)?),
    ] {
        let s = statistical_dimension_mc(&c, 4000, 1)?;
        let p = polar_statdim_mc(&c, 4000, 1)?;
        let w = mean_width_mc(&c, 4000, 1)?;
        println!(
            "{name:<22} delta {:>6.2} +- {:.2}  polar {:>6.2}  width {:.3}",
            s.mean, s.std_error, p.mean, w.width
        );
    }

    let pw = polytope_width_sq(500, 64, 2000, 2)?;
    println!("\nhull of 500 directions in R^64: w^2 {:.3}, 2 ln N {:.3}", pw.width_sq, pw.reference);

    let c = ConeSpec::coordinate_subspace(30, 6)?;
    for codim in [4, 12] {
        let g = gordon_escape_check(&c, codim, 200, 3)?;
        println!(
            "subspace d=6 in R^30, codim {codim:>2}: width {:.3} vs threshold {:.3}, escape rate {:.2}",
            g.width, g.width_threshold, g.escape_rate
        );
    }
    Ok(())
}
