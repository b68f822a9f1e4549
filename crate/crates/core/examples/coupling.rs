//! Shared-trajectory coupling: passage times are exactly subadditive and an
//! extra particle can only enlarge the visited set.
//!
//!     cargo run --release --example coupling

use frog_model::passage::{chain_time, containment_failure, passage_time, subadditivity_check, wake_transit};
use frog_model::{run, Family, InitialConfigSpec, Mode, SiteCoord};

fn main() -> frog_model::Result<()> {
    let spec = InitialConfigSpec::new(2, Family::Bernoulli { p: 0.5 }, 3).conditioned();
    let horizon = 500;
    let a = run(&spec, SiteCoord::origin(2), 200, Mode::Identity)?;
    // T(y, .) is finite only from an occupied y
    let y = a.sites.iter().find(|v| v.eta > 0 && v.site.l1_norm() >= 5).unwrap().site;
    let (x, z) = (SiteCoord::origin(2), SiteCoord::from(&[9, -3]));

    let s = subadditivity_check(&spec, x, y, z, horizon)?;
    println!("T(x,z) = {}, T(x,y) = {}, T(y,z) = {}: {:?}", s.t_xz, s.t_xy, s.t_yz, s.verdict);
    println!("T(x,z) = {}", passage_time(&spec, x, z, horizon)?);
    println!("single-walker chain x -> y -> z: {}", chain_time(&spec, &[x, y, z], horizon));

    let more = spec.clone().with_extra(x, 1);
    let b = run(&more, x, 200, Mode::Identity)?;
    match containment_failure(&a, &b) {
        None => println!("with one extra particle: {} >= {} sites, contained at every time", b.sites.len(), a.sites.len()),
        Some((t, site)) => println!("containment fails at time {t}, site {site}"),
    }

    // U is 0 from an occupied site; look at an empty one
    let empty = a.sites.iter().find(|v| v.eta == 0 && v.site.l1_norm() >= 5).unwrap().site;
    let w = wake_transit(&spec, &a, empty, 200)?;
    println!("a particle at {empty} needs {:?} steps to reach an occupied site ({:?})", w.u, w.landing);
    Ok(())
}
