//! A run that exceeds its memory budget stops with a snapshot; resuming from
//! the snapshot reproduces the uninterrupted run exactly.
//!
//!     cargo run --release --example snapshot_resume

use frog_model::engine::Simulation;
use frog_model::{run, Error, Family, InitialConfigSpec, Mode, RunOptions, SiteCoord};

fn main() -> frog_model::Result<()> {
    let spec = InitialConfigSpec::new(2, Family::Poisson { lambda: 2.0 }, 23).conditioned();
    let horizon = 120;
    let dir = std::env::temp_dir();
    let tight = RunOptions {
        memory_budget: 1 << 20,
        snapshot_dir: Some(dir.clone()),
        ..RunOptions::default()
    };
    let mut sim = Simulation::new(&spec, SiteCoord::origin(2), horizon, Mode::Identity, &tight)?;
    let snapshot = match sim.run_to_horizon() {
        Err(Error::ResourceLimit { message, snapshot }) => {
            println!("stopped: {message}");
            snapshot.expect("snapshot written")
        }
        other => panic!("expected the budget to run out: {other:?}"),
    };
    let mut resumed = Simulation::resume(&spec, &snapshot, &RunOptions::default())?;
    println!("resuming at time {}", resumed.clock());
    resumed.run_to_horizon()?;
    let direct = run(&spec, SiteCoord::origin(2), horizon, Mode::Identity)?;
    println!("identical to the uninterrupted run: {}", resumed.into_record().sites == direct.sites);
    std::fs::remove_file(snapshot)?;
    Ok(())
}
