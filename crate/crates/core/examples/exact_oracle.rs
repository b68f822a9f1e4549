//! Exhaustive enumeration on a small finite configuration, compared with
//! Monte Carlo frequencies from the engine.
//!
//!     cargo run --release --example exact_oracle

use frog_model::oracle::{exact_passage_distribution, to_f64, FiniteConfig, DEFAULT_LEAF_BUDGET};
use frog_model::randomness::derive_seed;
use frog_model::stats::Proportion;
use frog_model::{run, Family, InitialConfigSpec, Mode, SiteCoord};

fn main() -> frog_model::Result<()> {
    let config = FiniteConfig::interval(-3, 3, 1);
    let horizon = 3;
    let exact = exact_passage_distribution(&config, horizon, DEFAULT_LEAF_BUDGET)?;
    println!("{} leaves enumerated", exact.leaves);

    let spec = InitialConfigSpec::new(1, Family::Constant { c: 1 }, 1)
        .with_overrides((-3..=3).map(|i| (SiteCoord::from(&[i]), 1)));
    let replicas = 20_000;
    let mut reached = [0u64; 4];
    for r in 0..replicas {
        let rec = run(&spec.with_seed(derive_seed(1, r)), SiteCoord::origin(1), horizon, Mode::Identity)?;
        for (k, y) in (0..4).map(|k| (k, SiteCoord::from(&[k as i32]))) {
            if rec.first_passage(&y).is_some_and(|t| t <= 2) {
                reached[k] += 1;
            }
        }
    }
    for (k, hits) in reached.iter().enumerate() {
        let y = SiteCoord::from(&[k as i32]);
        let p = exact.prob_within(&y, 2);
        let freq = Proportion::new(*hits, replicas);
        println!(
            "P[T(0,{k}) <= 2] = {p:>5} = {:.4}   simulated {:.4} [{:.4}, {:.4}]",
            to_f64(&p),
            freq.estimate,
            freq.ci_low,
            freq.ci_high
        );
    }
    for (size, p) in &exact.visited_size {
        println!("P[|xi_3| = {size}] = {p}");
    }
    Ok(())
}
