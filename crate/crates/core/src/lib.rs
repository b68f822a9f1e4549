//! Deterministic simulation and shape estimation for the discrete-time frog
//! model on `Z^d`.
//!
//! Active particles perform independent simple random walks; a sleeping
//! particle wakes up the first time an active particle lands on its site.
//! Every random quantity (initial particle counts, every step of every walk)
//! is a pure function of a 64-bit master seed, so processes started from
//! different sites on the same configuration are exactly coupled.
//!
//! Module map:
//!
//! - [`lattice`]: sites, the L1 norm, diamonds, hyperoctahedral symmetry.
//! - [`randomness`]: initial configurations and the keyed step streams.
//! - [`engine`]: forward simulation, [`engine::PassageRecord`] and its CSV format.
//! - [`passage`]: passage times between arbitrary sites on shared randomness.
//! - [`shape`]: time-constant estimation, limit-shape reconstruction, metrics.
//! - [`oracle`]: exhaustive enumeration for exact small-horizon probabilities.
//! - [`experiments`]: reproducible manifest-driven studies.
//! - [`cli`]: the `frog` command-line front end.

pub mod cli;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod io;
pub mod lattice;
pub mod oracle;
pub mod passage;
pub mod randomness;
pub mod shape;
pub mod stats;

pub use engine::{run, Mode, PassageRecord, RunOptions, Simulation};
pub use error::{Error, Result};
pub use lattice::{Diamond, SiteCoord};
pub use passage::CensoredTime;
pub use randomness::{Family, InitialConfigSpec};
