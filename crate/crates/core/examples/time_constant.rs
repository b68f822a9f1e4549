//! Time-constant estimates T(0, n x)/n along a few directions, with the
//! occupied-ray variant.
//!
//!     cargo run --release --example time_constant -- [replicas]

use frog_model::shape::{estimate_mu_many, MuOptions};
use frog_model::{Family, InitialConfigSpec, SiteCoord};

fn main() -> frog_model::Result<()> {
    let replicas: usize = std::env::args().nth(1).map_or(20, |a| a.parse().expect("replicas"));
    let spec = InitialConfigSpec::new(2, Family::Bernoulli { p: 0.5 }, 11).conditioned();
    let dirs = [SiteCoord::from(&[1, 0]), SiteCoord::from(&[0, 1]), SiteCoord::from(&[1, 1])];
    let opts = MuOptions { ray: true, ..Default::default() };
    let estimates = estimate_mu_many(&spec, &dirs, &[20, 40, 80], replicas, 800, &opts)?;
    for e in &estimates {
        println!(
            "mu{}: {:.4} [{:.4}, {:.4}]  censored {}{}",
            e.direction,
            e.point,
            e.ci_low,
            e.ci_high,
            e.censored_at_max,
            if e.unreliable { " (unreliable)" } else { "" }
        );
        for at in &e.per_n {
            if let Some(s) = at.summary {
                println!("    n={:3}  {:.4} +- {:.4}", at.n, s.mean, s.half_width());
            }
        }
        if let Some(ray) = &e.ray {
            println!(
                "    ray k={}: p1 * mu' = {:.4} (consistent with mu: {})",
                ray.k, ray.p1_mu_prime, ray.consistent
            );
        }
    }
    let (e1, e2, diag) = (&estimates[0], &estimates[1], &estimates[2]);
    println!("symmetry e1/e2 overlap: {}", e1.overlaps(e2));
    println!("mu(e1+e2) <= mu(e1)+mu(e2): {}", diag.point <= e1.point + e2.point);
    Ok(())
}
