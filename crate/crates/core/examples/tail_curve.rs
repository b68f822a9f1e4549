//! Empirical tail P[T(0, x0) >= m] with Wilson intervals.
//!
//!     cargo run --release --example tail_curve -- [replicas]

use frog_model::experiments::tail_curve;
use frog_model::{Family, InitialConfigSpec, SiteCoord};

fn main() -> frog_model::Result<()> {
    let replicas = std::env::args().nth(1).map_or(500, |a| a.parse().expect("replicas"));
    let spec = InitialConfigSpec::new(2, Family::Bernoulli { p: 0.3 }, 19).conditioned();
    let r = tail_curve(&spec, SiteCoord::from(&[6, 0]), &[6, 10, 15, 20, 30, 45, 70, 100], replicas)?;
    for p in &r.curve {
        println!("P[T >= {:3}] = {:.4}  [{:.4}, {:.4}]", p.m, p.survival.estimate, p.survival.ci_low, p.survival.ci_high);
    }
    Ok(())
}
