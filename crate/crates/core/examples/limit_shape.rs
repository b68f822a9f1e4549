//! Rescaled visited sets, their shape metrics, and the estimated limit
//! shape {mu <= 1}; writes SVG pictures.
//!
//!     cargo run --release --example limit_shape -- [out_dir]

use std::path::PathBuf;

use frog_model::io::atomic_write;
use frog_model::shape::{default_directions, metrics, mu_from_records, rescale, shape_from_mu};
use frog_model::{run, Family, InitialConfigSpec, Mode, SiteCoord};

fn main() -> frog_model::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "limit_shape".into()));
    let spec = InitialConfigSpec::new(2, Family::Bernoulli { p: 0.5 }, 5).conditioned();
    let records = (0..8)
        .map(|r| run(&spec.with_seed(frog_model::randomness::derive_seed(5, r)), SiteCoord::origin(2), 300, Mode::Identity))
        .collect::<frog_model::Result<Vec<_>>>()?;

    let mut previous = None;
    for n in [25, 50, 100] {
        let set = rescale(&records[0], n)?;
        let m = metrics(&set, previous.as_ref())?;
        println!(
            "n={n:3}  coverage {:.4}  symmetry {:.4}  convexity {:.4}  hausdorff to previous {:?}",
            m.coverage,
            m.symmetry_defect,
            m.convexity_defect.unwrap(),
            m.hausdorff_to_reference
        );
        atomic_write(&out.join(format!("visited_{n}.svg")), set.to_svg(&format!("n = {n}")).unwrap().as_bytes())?;
        previous = Some(set);
    }

    let mu = default_directions(2)
        .into_iter()
        .map(|x| mu_from_records(&spec, &records, x, &[20 / x.l1_norm() as u32, 100 / x.l1_norm() as u32]))
        .collect::<frog_model::Result<Vec<_>>>()?;
    let shape = shape_from_mu(&mu)?;
    for u in [[1.0, 0.0], [0.5, 0.5]] {
        println!("radius toward {u:?}: {:?}", shape.radius(u).flatten());
    }
    atomic_write(&out.join("shape.svg"), shape.to_svg("estimated limit shape").unwrap().as_bytes())?;
    println!("pictures in {}", out.display());
    Ok(())
}
