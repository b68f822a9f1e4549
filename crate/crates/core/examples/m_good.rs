//! Occupation-density (m-good) check of a configuration at several m.
//!
//!     cargo run --release --example m_good

use frog_model::experiments::m_good_check;
use frog_model::{Family, InitialConfigSpec};

fn main() -> frog_model::Result<()> {
    for (d, m_values) in [(1, vec![100, 10_000]), (2, vec![100, 10_000, 1_000_000]), (3, vec![1_000])] {
        let spec = InitialConfigSpec::new(d, Family::Bernoulli { p: 0.5 }, 13);
        for m in m_values {
            let r = m_good_check(&spec, m, 1.0)?;
            println!("d={d} m={m}: n_d = {:.2}, n_hat = {:.3}, m-good: {}", r.params.n_d, r.params.n_hat, r.m_good);
            for c in &r.clauses {
                println!("    {}: {} regions, min ratio {:.4} (need {:.4})", c.clause, c.regions, c.min_ratio, c.threshold);
            }
        }
    }
    Ok(())
}
