//! Local growth after first visit: how large an L1 ball around x is covered
//! n steps after T(0, x).
//!
//!     cargo run --release --example growth_probe

use frog_model::experiments::{default_growth_grid, growth_probe};
use frog_model::{Family, InitialConfigSpec, SiteCoord};

fn main() -> frog_model::Result<()> {
    let spec = InitialConfigSpec::new(2, Family::Bernoulli { p: 0.5 }, 17).conditioned();
    let probes = [SiteCoord::from(&[12, 0]), SiteCoord::from(&[-6, 6]), SiteCoord::from(&[0, -12])];
    let schedule = [10, 20, 40];
    let grid = default_growth_grid();
    let r = growth_probe(&spec, &probes, &schedule, 20, 500, &grid, 0.95)?;
    for (n, row) in r.n_schedule.iter().zip(&r.frequency) {
        let cells: Vec<String> = row.iter().take(8).map(|f| format!("{f:.2}")).collect();
        println!("n={n:3}  {}", cells.join(" "));
    }
    let header: Vec<String> = grid.iter().take(8).map(|g| format!("{g:.2}")).collect();
    println!("grid   {}", header.join(" "));
    println!("largest constant reaching 0.95: {:?} ({} censored of {})", r.growth_delta, r.censored, r.trials);
    Ok(())
}
