//! Coherence statistics of spherical and block-structured dictionaries.

use ghostcone::dictionary::{gen_spherical, gen_structured, gram_summary, mutual_coherence};
use ghostcone::error::Result;
use ghostcone::interference::default_mu_eff;

fn main() -> Result<()> {
    let n = 256;
    let sph = gen_spherical(n, 1024, 1)?;
    let g = gram_summary(&sph, None)?;
    println!("spherical n={n} m=1024");
    println!("  mu_global {:.4}  mean |G_ij| {:.4}  (sqrt(2/(pi n)) = {:.4})", g.mu_global, g.mean_abs_offdiag, default_mu_eff(n));
    println!("  mutual coherence {:.4}", mutual_coherence(&sph)?);

    let st = gen_structured(n, 16, 64, 0.15, 1)?;
    let g = gram_summary(&st, Some(st.partition().unwrap()))?;
    println!("structured 16 blocks x 64 atoms, mu_local 0.15");
    println!(
        "  mu_global {:.4}  within {:.4}  across {:.4}",
        g.mu_global,
        g.mu_within.unwrap(),
        g.mu_across.unwrap()
    );
    Ok(())
}
