//! One run of the process: visited-set growth, the passage record on disk,
//! and the two engine modes side by side.
//!
//!     cargo run --release --example simulate -- [horizon] [out.csv]

use frog_model::engine::verify_record;
use frog_model::lattice::diamond_size;
use frog_model::{run, Family, InitialConfigSpec, Mode, SiteCoord};

fn main() -> frog_model::Result<()> {
    let mut args = std::env::args().skip(1);
    let horizon: u32 = args.next().map_or(200, |a| a.parse().expect("horizon"));
    let out = args.next().unwrap_or_else(|| "simulate_record.csv".into());

    let spec = InitialConfigSpec::new(2, Family::Bernoulli { p: 0.5 }, 7).conditioned();
    for mode in [Mode::Identity, Mode::Aggregate] {
        let record = run(&spec, SiteCoord::origin(2), horizon, mode)?;
        verify_record(&spec, &record)?;
        println!("{mode:?}");
        for n in [horizon / 4, horizon / 2, horizon] {
            let visited = record.visited_at(n)?.len();
            println!(
                "  n={n:4}  |xi_n| = {visited:7}  coverage {:.4}  active {}",
                visited as f64 / diamond_size(2, n as u64)? as f64,
                record.active_count(n)?
            );
        }
        if mode == Mode::Identity {
            record.write_csv(out.as_ref())?;
            println!("  record written to {out}");
        }
    }
    Ok(())
}
