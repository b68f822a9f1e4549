//! Heavy-tailed initial counts against a Bernoulli baseline with the same
//! occupation probability: the heavy tail fills the whole diamond.
//!
//!     cargo run --release --example full_diamond -- [replicas]

use frog_model::experiments::{full_diamond_experiment, ExperimentKind, ExperimentManifest};
use frog_model::{Family, InitialConfigSpec};

fn main() -> frog_model::Result<()> {
    let replicas = std::env::args().nth(1).map_or(6, |a| a.parse().expect("replicas"));
    let heavy = InitialConfigSpec::new(2, Family::HeavyTail { tail_delta: 1.5, cap: 1 << 32 }, 21).conditioned();
    let mut m = ExperimentManifest::new(ExperimentKind::FullDiamond, heavy);
    m.replicas = Some(replicas);
    m.n_schedule = Some(vec![25, 50, 100, 200]);
    let report = full_diamond_experiment(&m)?;
    println!("baseline: {:?}", report.baseline.family);
    for s in &report.per_n {
        println!(
            "n={:3}  heavy {:.4}  baseline {:.4}  heavy larger in {:.0}% of pairs",
            s.n,
            s.heavy_mean,
            s.baseline_mean,
            100.0 * s.heavy_wins
        );
    }
    Ok(())
}
