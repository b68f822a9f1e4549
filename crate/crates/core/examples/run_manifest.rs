//! Executes a manifest file, as `frog exec` does, and lists what it wrote.
//!
//!     cargo run --release --example run_manifest -- crates/core/manifests/shape_d2.json [out_dir]

use frog_model::experiments::{execute, ExperimentManifest};

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args.next().expect("usage: run_manifest <manifest.json> [out_dir]");
    let result = ExperimentManifest::load(path.as_ref()).and_then(|mut m| {
        if let Some(dir) = args.next() {
            m.output_dir = Some(dir.into());
        }
        execute(&m)
    });
    match result {
        Ok(outcome) => {
            outcome.summary.iter().for_each(|l| println!("{l}"));
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
