//! Forward simulation of the frog dynamics.
//!
//! One time step: every active particle moves one unit (all moves happen
//! simultaneously), then every position that is occupied for the first time
//! is marked visited and its sleeping particles wake up. A particle woken at
//! time `n` makes its first move at time `n + 1`.
//!
//! Two modes share the same initial configuration:
//!
//! - `Identity` tracks every particle by `(origin, index)` and moves it along
//!   its own keyed trajectory stream. Runs from different sources on the same
//!   spec are therefore coupled particle by particle.
//! - `Aggregate` keeps only the number of particles per position and splits
//!   each crowd multinomially, keyed by `(position, time)`. Cost scales with
//!   occupied positions rather than particles, which is what makes heavy
//!   tailed configurations (billions of particles on a site) tractable.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::lattice::{SiteCoord, MAX_DIM};
use crate::randomness::{multinomial_split, stream_step, InitialConfigSpec};

/// Horizons must stay below `2^30` so no coordinate can overflow.
pub const MAX_HORIZON: u32 = (1 << 30) - 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Identity,
    Aggregate,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Mode::Identity),
            "aggregate" => Ok(Mode::Aggregate),
            other => Err(Error::invalid("mode", format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Approximate bound on the bytes held by one simulation.
    pub memory_budget: u64,
    /// Largest dense lookup grid (bytes) before falling back to hashing.
    pub dense_limit: u64,
    /// Where partial-state snapshots go when the budget is exceeded;
    /// defaults to the system temp directory.
    pub snapshot_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            memory_budget: 1 << 31,
            dense_limit: 1 << 28,
            snapshot_dir: None,
        }
    }
}

/// A site's first-passage time and initial particle count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitedSite {
    pub site: SiteCoord,
    pub time: u32,
    pub eta: u64,
}

/// An awake particle in identity mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Walker {
    pub origin: SiteCoord,
    pub index: u64,
    /// Moves made since waking up.
    pub steps: u32,
    pub pos: SiteCoord,
}

/// Identity-mode particles, split so the per-step loop only touches the
/// 32-byte moving part.
#[derive(Clone, Default)]
struct Walkers {
    hot: Vec<Hot>,
    ids: Vec<(SiteCoord, u64)>,
}

#[derive(Clone, Copy)]
struct Hot {
    key: u64,
    steps: u32,
    pos: SiteCoord,
}

impl Walkers {
    fn len(&self) -> usize {
        self.hot.len()
    }

    fn push(&mut self, spec: &InitialConfigSpec, origin: SiteCoord, index: u64, steps: u32, pos: SiteCoord) {
        self.hot.push(Hot {
            key: spec.stream_key(&origin, index),
            steps,
            pos,
        });
        self.ids.push((origin, index));
    }

    fn get(&self, i: usize) -> Walker {
        let h = self.hot[i];
        let (origin, index) = self.ids[i];
        Walker {
            origin,
            index,
            steps: h.steps,
            pos: h.pos,
        }
    }

    fn clear(&mut self) {
        self.hot.clear();
        self.ids.clear();
    }
}

/// Box `[-radius, radius]^d` around a center, flattened.
#[derive(Clone, Debug)]
struct Grid {
    dim: usize,
    radius: i64,
    side: usize,
    center: SiteCoord,
}

impl Grid {
    fn cells(dim: usize, radius: u32) -> Option<u64> {
        (2 * radius as u64 + 1).checked_pow(dim as u32)
    }

    #[inline]
    fn index(&self, x: &SiteCoord) -> usize {
        let mut idx = 0usize;
        for axis in (0..self.dim).rev() {
            let off = (x.coord(axis) as i64 - self.center.coord(axis) as i64 + self.radius) as usize;
            debug_assert!(off < self.side, "site {x} outside grid");
            idx = idx * self.side + off;
        }
        idx
    }

    fn site(&self, mut idx: usize) -> SiteCoord {
        let mut c = [0i32; MAX_DIM];
        for slot in c.iter_mut().take(self.dim) {
            *slot = (idx % self.side) as i32 - self.radius as i32;
            idx /= self.side;
        }
        self.center + SiteCoord::new(&c[..self.dim]).expect("grid dimension")
    }
}

enum VisitedStore {
    /// One bit per cell; the times live in the ordered site list.
    Dense { grid: Grid, bits: Vec<u64> },
    Sparse(FxHashMap<SiteCoord, u32>),
}

impl VisitedStore {
    #[inline]
    fn contains(&self, x: &SiteCoord) -> bool {
        match self {
            VisitedStore::Dense { grid, bits } => {
                let i = grid.index(x);
                bits[i >> 6] >> (i & 63) & 1 == 1
            }
            VisitedStore::Sparse(map) => map.contains_key(x),
        }
    }

    fn insert(&mut self, x: SiteCoord, t: u32) {
        match self {
            VisitedStore::Dense { grid, bits } => {
                let i = grid.index(&x);
                bits[i >> 6] |= 1 << (i & 63);
            }
            VisitedStore::Sparse(map) => {
                map.insert(x, t);
            }
        }
    }

    fn bytes(&self) -> u64 {
        match self {
            VisitedStore::Dense { bits, .. } => bits.len() as u64 * 8,
            VisitedStore::Sparse(map) => map.capacity() as u64 * 32,
        }
    }
}

/// Accumulates the next generation of crowds in aggregate mode.
enum CrowdAccumulator {
    Dense {
        grid: Grid,
        counts: Vec<u64>,
        occupied: Vec<usize>,
    },
    Sparse(FxHashMap<SiteCoord, u64>),
}

impl CrowdAccumulator {
    #[inline]
    fn add(&mut self, x: SiteCoord, count: u64) {
        match self {
            CrowdAccumulator::Dense { grid, counts, occupied } => {
                let i = grid.index(&x);
                if counts[i] == 0 {
                    occupied.push(i);
                }
                counts[i] += count;
            }
            CrowdAccumulator::Sparse(map) => *map.entry(x).or_insert(0) += count,
        }
    }

    fn drain_into(&mut self, out: &mut Vec<(SiteCoord, u64)>) {
        out.clear();
        match self {
            CrowdAccumulator::Dense { grid, counts, occupied } => {
                for &i in occupied.iter() {
                    out.push((grid.site(i), counts[i]));
                    counts[i] = 0;
                }
                occupied.clear();
            }
            CrowdAccumulator::Sparse(map) => out.extend(map.drain()),
        }
    }
}

enum Actives {
    Identity(Walkers),
    Aggregate {
        crowds: Vec<(SiteCoord, u64)>,
        next: CrowdAccumulator,
    },
}

/// Live state of one frog process.
pub struct Simulation {
    spec: InitialConfigSpec,
    digest: String,
    source: SiteCoord,
    horizon: u32,
    mode: Mode,
    clock: u32,
    visited: VisitedStore,
    sites: Vec<VisitedSite>,
    frontier_sizes: Vec<u64>,
    active_counts: Vec<u64>,
    actives: Actives,
    options: RunOptions,
    fresh: Vec<SiteCoord>,
}

impl Simulation {
    pub fn new(
        spec: &InitialConfigSpec,
        source: SiteCoord,
        horizon: u32,
        mode: Mode,
        options: &RunOptions,
    ) -> Result<Self> {
        spec.validate()?;
        if horizon > MAX_HORIZON {
            return Err(Error::invalid(
                "horizon",
                format!("horizon must be below 2^30, got {horizon}"),
            ));
        }
        if source.dim() != spec.dimension {
            return Err(Error::invalid(
                "source",
                format!("source {source} does not have dimension {}", spec.dimension),
            ));
        }
        let d = spec.dimension;
        let grid = Grid::cells(d, horizon)
            .filter(|&cells| cells / 8 <= options.dense_limit.min(options.memory_budget / 2))
            .map(|_| Grid {
                dim: d,
                radius: horizon as i64,
                side: 2 * horizon as usize + 1,
                center: source,
            });
        let visited = match &grid {
            Some(g) => VisitedStore::Dense {
                grid: g.clone(),
                bits: vec![0u64; (Grid::cells(d, horizon).unwrap() as usize).div_ceil(64)],
            },
            None => VisitedStore::Sparse(FxHashMap::default()),
        };
        let actives = match mode {
            Mode::Identity => Actives::Identity(Walkers::default()),
            Mode::Aggregate => {
                let next = match &grid {
                    Some(g) if Grid::cells(d, horizon).unwrap().saturating_mul(8) <= options.dense_limit => {
                        CrowdAccumulator::Dense {
                            grid: g.clone(),
                            counts: vec![0u64; Grid::cells(d, horizon).unwrap() as usize],
                            occupied: Vec::new(),
                        }
                    }
                    _ => CrowdAccumulator::Sparse(FxHashMap::default()),
                };
                Actives::Aggregate {
                    crowds: Vec::new(),
                    next,
                }
            }
        };
        let mut sim = Simulation {
            spec: spec.clone(),
            digest: spec.digest(),
            source,
            horizon,
            mode,
            clock: 0,
            visited,
            sites: Vec::new(),
            frontier_sizes: Vec::new(),
            active_counts: Vec::new(),
            actives,
            options: options.clone(),
            fresh: Vec::new(),
        };
        let eta = spec.eta_at(&source);
        if eta >= 1 {
            sim.check_budget(eta)?;
            sim.visit(source, eta);
        }
        sim.frontier_sizes.push(sim.sites.len() as u64);
        sim.active_counts.push(sim.active_total());
        Ok(sim)
    }

    pub fn clock(&self) -> u32 {
        self.clock
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn source(&self) -> SiteCoord {
        self.source
    }

    pub fn spec(&self) -> &InitialConfigSpec {
        &self.spec
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Visited sites in order of first passage.
    pub fn visited(&self) -> &[VisitedSite] {
        &self.sites
    }

    pub fn is_visited(&self, x: &SiteCoord) -> bool {
        x.l1_dist(&self.source) <= self.clock as u64 && self.visited.contains(x)
    }

    /// Identity-mode particles (empty in aggregate mode).
    pub fn walkers(&self) -> Vec<Walker> {
        match &self.actives {
            Actives::Identity(w) => (0..w.len()).map(|i| w.get(i)).collect(),
            Actives::Aggregate { .. } => Vec::new(),
        }
    }

    /// Active particle count per occupied position.
    pub fn crowds(&self) -> Vec<(SiteCoord, u64)> {
        let mut out: Vec<(SiteCoord, u64)> = match &self.actives {
            Actives::Identity(ws) => {
                let mut m: FxHashMap<SiteCoord, u64> = FxHashMap::default();
                for w in &ws.hot {
                    *m.entry(w.pos).or_insert(0) += 1;
                }
                m.into_iter().collect()
            }
            Actives::Aggregate { crowds, .. } => crowds.clone(),
        };
        out.sort_unstable();
        out
    }

    /// Number of currently awake particles.
    pub fn active_total(&self) -> u64 {
        match &self.actives {
            Actives::Identity(w) => w.len() as u64,
            Actives::Aggregate { crowds, .. } => crowds.iter().map(|c| c.1).sum(),
        }
    }

    fn state_bytes(&self, extra_particles: u64) -> u64 {
        let actives = match &self.actives {
            Actives::Identity(w) => (w.len() as u64 + extra_particles) * 64,
            Actives::Aggregate { crowds, .. } => crowds.len() as u64 * 64,
        };
        actives + self.sites.len() as u64 * std::mem::size_of::<VisitedSite>() as u64 + self.visited.bytes()
    }

    fn check_budget(&self, extra_particles: u64) -> Result<()> {
        let need = self.state_bytes(extra_particles);
        if need <= self.options.memory_budget {
            return Ok(());
        }
        let dir = self.options.snapshot_dir.clone().unwrap_or_else(std::env::temp_dir);
        let path = dir.join(format!("frog-snapshot-{}-t{}.csv", &self.digest[..12], self.clock));
        let snapshot = self.write_snapshot(&path).ok().map(|_| path);
        Err(Error::ResourceLimit {
            message: format!(
                "state would need about {need} bytes at time {} (budget {})",
                self.clock, self.options.memory_budget
            ),
            snapshot,
        })
    }

    fn visit(&mut self, x: SiteCoord, eta: u64) {
        let t = self.clock;
        self.visited.insert(x, t);
        self.sites.push(VisitedSite { site: x, time: t, eta });
        match &mut self.actives {
            Actives::Identity(ws) => {
                for k in 1..=eta {
                    ws.push(&self.spec, x, k, 0, x);
                }
            }
            Actives::Aggregate { crowds, next } => {
                // before the first step the crowd list is built directly
                if t == 0 {
                    crowds.push((x, eta));
                } else if eta > 0 {
                    next.add(x, eta);
                }
            }
        }
    }

    /// Advances one time unit. Returns the number of newly visited sites.
    pub fn step(&mut self) -> Result<usize> {
        if self.clock >= self.horizon {
            return Err(Error::Precondition(format!(
                "simulation already at its horizon {}",
                self.horizon
            )));
        }
        let d = self.spec.dimension;
        self.clock += 1;
        let t = self.clock;
        let mut fresh = std::mem::take(&mut self.fresh);
        fresh.clear();
        match &mut self.actives {
            Actives::Identity(ws) => {
                for w in ws.hot.iter_mut() {
                    w.steps += 1;
                    w.pos = stream_step(w.key, w.steps as u64, d).apply(w.pos);
                    if !self.visited.contains(&w.pos) {
                        fresh.push(w.pos);
                    }
                }
            }
            Actives::Aggregate { crowds, next } => {
                let mut split = [0u64; 2 * MAX_DIM];
                for &(pos, count) in crowds.iter() {
                    multinomial_split(self.spec.master_seed, &pos, t, count, d, &mut split);
                    for (i, &k) in split[..2 * d].iter().enumerate() {
                        if k > 0 {
                            let y = pos.step(i / 2, if i % 2 == 0 { 1 } else { -1 });
                            next.add(y, k);
                            if !self.visited.contains(&y) {
                                fresh.push(y);
                            }
                        }
                    }
                }
            }
        }
        fresh.sort_unstable();
        fresh.dedup();
        let etas: Vec<u64> = fresh.iter().map(|x| self.spec.eta_at(x)).collect();
        let woken: u64 = etas.iter().sum();
        if let Err(e) = self.check_budget(woken) {
            self.rollback(t);
            self.fresh = fresh;
            return Err(self.retry_snapshot(e));
        }
        for (&x, &eta) in fresh.iter().zip(&etas) {
            self.visit(x, eta);
        }
        if let Actives::Aggregate { crowds, next } = &mut self.actives {
            next.drain_into(crowds);
        }
        let n = fresh.len();
        self.frontier_sizes.push(n as u64);
        self.active_counts.push(self.active_total());
        self.fresh = fresh;
        Ok(n)
    }

    /// Undoes the moves of the step to time `t` so a snapshot is consistent.
    fn rollback(&mut self, t: u32) {
        let d = self.spec.dimension;
        match &mut self.actives {
            Actives::Identity(ws) => {
                for w in ws.hot.iter_mut() {
                    let st = stream_step(w.key, w.steps as u64, d);
                    w.pos = w.pos.step(st.axis as usize, if st.positive { -1 } else { 1 });
                    w.steps -= 1;
                }
            }
            Actives::Aggregate { next, .. } => {
                let mut scratch = Vec::new();
                next.drain_into(&mut scratch);
            }
        }
        debug_assert_eq!(self.clock, t);
        self.clock = t - 1;
    }

    fn retry_snapshot(&self, err: Error) -> Error {
        match err {
            Error::ResourceLimit { message, .. } => {
                let dir = self.options.snapshot_dir.clone().unwrap_or_else(std::env::temp_dir);
                let path = dir.join(format!("frog-snapshot-{}-t{}.csv", &self.digest[..12], self.clock));
                let snapshot = self.write_snapshot(&path).ok().map(|_| path);
                Error::ResourceLimit { message, snapshot }
            }
            other => other,
        }
    }

    /// Runs to the horizon.
    pub fn run_to_horizon(&mut self) -> Result<()> {
        self.run_until_time(self.horizon)
    }

    /// Runs until time `t` (or the horizon, whichever comes first).
    pub fn run_until_time(&mut self, t: u32) -> Result<()> {
        let t = t.min(self.horizon);
        while self.clock < t {
            if self.active_total() == 0 {
                self.fast_forward(t);
                break;
            }
            self.step()?;
        }
        Ok(())
    }

    /// Runs until every target is visited or the horizon is reached.
    pub fn run_until_visited(&mut self, targets: &[SiteCoord]) -> Result<()> {
        let mut pending: Vec<SiteCoord> = targets.iter().copied().filter(|x| !self.is_visited(x)).collect();
        while !pending.is_empty() && self.clock < self.horizon {
            if self.active_total() == 0 {
                self.fast_forward(self.horizon);
                break;
            }
            if self.step()? > 0 {
                pending.retain(|x| !self.is_visited(x));
            }
        }
        Ok(())
    }

    /// Nothing can happen without active particles.
    fn fast_forward(&mut self, t: u32) {
        while self.clock < t {
            self.clock += 1;
            self.frontier_sizes.push(0);
            self.active_counts.push(0);
        }
    }

    /// The record of everything observed so far (complete up to `clock`).
    pub fn record(&self) -> PassageRecord {
        PassageRecord {
            source: self.source,
            dimension: self.spec.dimension,
            horizon: self.clock,
            mode: self.mode,
            sites: self.sites.clone(),
            frontier_sizes: self.frontier_sizes.clone(),
            active_counts: self.active_counts.clone(),
            config_digest: self.digest.clone(),
            index: OnceLock::new(),
        }
    }

    pub fn into_record(self) -> PassageRecord {
        PassageRecord {
            source: self.source,
            dimension: self.spec.dimension,
            horizon: self.clock,
            mode: self.mode,
            sites: self.sites,
            frontier_sizes: self.frontier_sizes,
            active_counts: self.active_counts,
            config_digest: self.digest,
            index: OnceLock::new(),
        }
    }

    /// Writes the record plus the table of active particles.
    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let mut out = self.record().to_csv_string(RecordKind::Snapshot, self.horizon);
        let d = self.spec.dimension;
        out.push_str("# actives\n");
        match &self.actives {
            Actives::Identity(ws) => {
                let cols: Vec<String> = (1..=d)
                    .map(|i| format!("o{i}"))
                    .chain(["index".into(), "steps".into()])
                    .chain((1..=d).map(|i| format!("p{i}")))
                    .collect();
                out.push_str(&cols.join(","));
                out.push('\n');
                for w in (0..ws.len()).map(|i| ws.get(i)) {
                    push_coords(&mut out, &w.origin);
                    let _ = write!(out, ",{},{},", w.index, w.steps);
                    push_coords(&mut out, &w.pos);
                    out.push('\n');
                }
            }
            Actives::Aggregate { crowds, .. } => {
                let cols: Vec<String> = (1..=d).map(|i| format!("p{i}")).chain(["count".into()]).collect();
                out.push_str(&cols.join(","));
                out.push('\n');
                let mut sorted = crowds.clone();
                sorted.sort_unstable();
                for (pos, count) in sorted {
                    push_coords(&mut out, &pos);
                    let _ = writeln!(out, ",{count}");
                }
            }
        }
        atomic_write(path, out.as_bytes())
    }

    /// Restores a simulation from a snapshot written by [`write_snapshot`].
    ///
    /// [`write_snapshot`]: Simulation::write_snapshot
    pub fn resume(spec: &InitialConfigSpec, path: &Path, options: &RunOptions) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let fmt_err = |message: String| Error::Format {
            path: path.to_path_buf(),
            message,
        };
        let (record_part, actives_part) = text
            .split_once("# actives\n")
            .ok_or_else(|| fmt_err("missing `# actives` section".into()))?;
        let (header, record) = PassageRecord::parse(record_part).map_err(fmt_err)?;
        if header.kind != RecordKind::Snapshot {
            return Err(fmt_err("not a snapshot".into()));
        }
        if header.config_digest != spec.digest() {
            return Err(fmt_err("snapshot was taken with a different spec".into()));
        }
        let mut sim = Simulation::new(spec, record.source, header.target_horizon, record.mode, options)?;
        sim.clock = record.horizon;
        sim.sites.clear();
        if let Actives::Aggregate { crowds, .. } = &mut sim.actives {
            crowds.clear();
        }
        if let Actives::Identity(ws) = &mut sim.actives {
            ws.clear();
        }
        for vs in &record.sites {
            sim.visited.insert(vs.site, vs.time);
        }
        sim.sites = record.sites;
        sim.frontier_sizes = record.frontier_sizes;
        sim.active_counts = record.active_counts;
        let d = spec.dimension;
        let mut lines = actives_part.lines();
        lines.next();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let v: Vec<i64> = line
                .split(',')
                .map(|f| f.trim().parse::<i64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| fmt_err(format!("bad actives row `{line}`: {e}")))?;
            let site = |s: &[i64]| SiteCoord::new(&s.iter().map(|&c| c as i32).collect::<Vec<_>>());
            match &mut sim.actives {
                Actives::Identity(ws) => {
                    if v.len() != 2 * d + 2 {
                        return Err(fmt_err(format!("bad actives row `{line}`")));
                    }
                    let origin = site(&v[..d])?;
                    ws.push(spec, origin, v[d] as u64, v[d + 1] as u32, site(&v[d + 2..])?);
                }
                Actives::Aggregate { crowds, .. } => {
                    if v.len() != d + 1 {
                        return Err(fmt_err(format!("bad actives row `{line}`")));
                    }
                    crowds.push((site(&v[..d])?, v[d] as u64));
                }
            }
        }
        Ok(sim)
    }
}

fn push_coords(out: &mut String, x: &SiteCoord) {
    for (i, c) in x.coords().iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{c}");
    }
}

/// `{site -> first passage time}` for one run, complete up to `horizon`.
#[derive(Clone, Debug)]
pub struct PassageRecord {
    pub source: SiteCoord,
    pub dimension: usize,
    /// Last simulated time; every first passage at or before it is recorded.
    pub horizon: u32,
    pub mode: Mode,
    /// Sorted by `(time, site)`.
    pub sites: Vec<VisitedSite>,
    /// Newly visited sites at each time `0..=horizon`.
    pub frontier_sizes: Vec<u64>,
    /// Awake particles at each time `0..=horizon`.
    pub active_counts: Vec<u64>,
    pub config_digest: String,
    index: OnceLock<FxHashMap<SiteCoord, u32>>,
}

impl PartialEq for PassageRecord {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
            && self.dimension == other.dimension
            && self.horizon == other.horizon
            && self.mode == other.mode
            && self.sites == other.sites
            && self.frontier_sizes == other.frontier_sizes
            && self.active_counts == other.active_counts
            && self.config_digest == other.config_digest
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Record,
    Snapshot,
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordHeader {
    format: String,
    kind: RecordKind,
    dimension: usize,
    source: SiteCoord,
    horizon: u32,
    /// Horizon the run was started with (snapshots resume towards it).
    target_horizon: u32,
    mode: Mode,
    config_digest: String,
    active_counts: Vec<u64>,
}

const RECORD_FORMAT: &str = "frog-passage-record/1";

impl PassageRecord {
    fn index(&self) -> &FxHashMap<SiteCoord, u32> {
        self.index
            .get_or_init(|| self.sites.iter().map(|v| (v.site, v.time)).collect())
    }

    /// `T(source, y)` if it is at most `horizon`.
    pub fn first_passage(&self, y: &SiteCoord) -> Option<u32> {
        self.index().get(y).copied()
    }

    fn check_time(&self, n: u32) -> Result<()> {
        if n > self.horizon {
            Err(Error::invalid(
                "n",
                format!("time {n} is beyond the record horizon {}", self.horizon),
            ))
        } else {
            Ok(())
        }
    }

    /// `xi_n`: sites with first passage at most `n`, in passage order.
    pub fn visited_at(&self, n: u32) -> Result<&[VisitedSite]> {
        self.check_time(n)?;
        let len: u64 = self.frontier_sizes[..=n as usize].iter().sum();
        Ok(&self.sites[..len as usize])
    }

    pub fn active_count(&self, n: u32) -> Result<u64> {
        self.check_time(n)?;
        Ok(self.active_counts[n as usize])
    }

    /// `sum of eta(x)` over `xi_n`; equals `active_count(n)` by conservation.
    pub fn eta_mass(&self, n: u32) -> Result<u64> {
        Ok(self.visited_at(n)?.iter().map(|v| v.eta).sum())
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Serializes as a `# {json header}` line followed by a CSV table with
    /// columns `x1..xd,first_passage,eta`.
    pub fn to_csv_string(&self, kind: RecordKind, target_horizon: u32) -> String {
        let header = RecordHeader {
            format: RECORD_FORMAT.into(),
            kind,
            dimension: self.dimension,
            source: self.source,
            horizon: self.horizon,
            target_horizon,
            mode: self.mode,
            config_digest: self.config_digest.clone(),
            active_counts: self.active_counts.clone(),
        };
        let mut out = String::with_capacity(32 * self.sites.len() + 256);
        out.push_str("# ");
        out.push_str(&serde_json::to_string(&header).expect("header serializes"));
        out.push('\n');
        let cols: Vec<String> = (1..=self.dimension)
            .map(|i| format!("x{i}"))
            .chain(["first_passage".into(), "eta".into()])
            .collect();
        out.push_str(&cols.join(","));
        out.push('\n');
        for v in &self.sites {
            push_coords(&mut out, &v.site);
            let _ = writeln!(out, ",{},{}", v.time, v.eta);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_csv_string(RecordKind::Record, self.horizon).as_bytes())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let text = text.split("# actives\n").next().unwrap_or("");
        Self::parse(text).map(|(_, r)| r).map_err(|message| Error::Format {
            path: path.to_path_buf(),
            message,
        })
    }

    fn parse(text: &str) -> std::result::Result<(RecordHeader, PassageRecord), String> {
        let mut lines = text.lines();
        let first = lines.next().ok_or("empty file")?;
        let json = first.strip_prefix("# ").ok_or("missing `# {json}` header line")?;
        let header: RecordHeader = serde_json::from_str(json).map_err(|e| format!("bad header: {e}"))?;
        if header.format != RECORD_FORMAT {
            return Err(format!("unsupported format `{}`", header.format));
        }
        let d = header.dimension;
        lines.next().ok_or("missing column header")?;
        let mut sites = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != d + 2 {
                return Err(format!("expected {} columns in `{line}`", d + 2));
            }
            let coords: Vec<i32> = f[..d]
                .iter()
                .map(|s| s.trim().parse::<i32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| format!("bad coordinate in `{line}`: {e}"))?;
            let site = SiteCoord::new(&coords).map_err(|e| e.to_string())?;
            let time = f[d].trim().parse::<u32>().map_err(|e| format!("bad time in `{line}`: {e}"))?;
            let eta = f[d + 1].trim().parse::<u64>().map_err(|e| format!("bad eta in `{line}`: {e}"))?;
            sites.push(VisitedSite { site, time, eta });
        }
        let mut frontier_sizes = vec![0u64; header.horizon as usize + 1];
        for v in &sites {
            let slot = frontier_sizes
                .get_mut(v.time as usize)
                .ok_or_else(|| format!("time {} beyond horizon {}", v.time, header.horizon))?;
            *slot += 1;
        }
        // keep the (time, site) order whatever order the rows came in
        sites.sort_by_key(|v| (v.time, v.site));
        let record = PassageRecord {
            source: header.source,
            dimension: d,
            horizon: header.horizon,
            mode: header.mode,
            sites,
            frontier_sizes,
            active_counts: header.active_counts.clone(),
            config_digest: header.config_digest.clone(),
            index: OnceLock::new(),
        };
        Ok((header, record))
    }
}

/// Simulates exactly `horizon` steps from `source`.
pub fn run(spec: &InitialConfigSpec, source: SiteCoord, horizon: u32, mode: Mode) -> Result<PassageRecord> {
    run_with(spec, source, horizon, mode, &RunOptions::default())
}

pub fn run_with(
    spec: &InitialConfigSpec,
    source: SiteCoord,
    horizon: u32,
    mode: Mode,
    options: &RunOptions,
) -> Result<PassageRecord> {
    let mut sim = Simulation::new(spec, source, horizon, mode, options)?;
    sim.run_to_horizon()?;
    Ok(sim.into_record())
}

/// Simulates until all `targets` are visited (or `horizon`); the record is
/// complete up to the time it stopped.
pub fn run_until(
    spec: &InitialConfigSpec,
    source: SiteCoord,
    horizon: u32,
    mode: Mode,
    targets: &[SiteCoord],
) -> Result<PassageRecord> {
    let mut sim = Simulation::new(spec, source, horizon, mode, &RunOptions::default())?;
    sim.run_until_visited(targets)?;
    Ok(sim.into_record())
}

/// Checks containment and conservation of a record against its spec:
/// `xi_n` inside the radius-`n` diamond around the source, monotone in `n`,
/// and `active_count(n) = sum of eta over xi_n` at every `n`.
pub fn verify_record(spec: &InitialConfigSpec, record: &PassageRecord) -> Result<()> {
    let violation = |m: String| Err(Error::InvariantViolation(m));
    let mut last = 0u32;
    let mut mass = 0u64;
    let mut cursor = 0usize;
    for n in 0..=record.horizon {
        while cursor < record.sites.len() && record.sites[cursor].time == n {
            let v = record.sites[cursor];
            if v.time < last {
                return violation(format!("sites out of time order at {}", v.site));
            }
            last = v.time;
            if v.site.l1_dist(&record.source) > v.time as u64 {
                return violation(format!(
                    "site {} visited at time {} is farther than {} from the source",
                    v.site, v.time, v.time
                ));
            }
            if spec.eta_at(&v.site) != v.eta {
                return violation(format!("recorded eta at {} differs from the spec", v.site));
            }
            mass += v.eta;
            cursor += 1;
        }
        if record.active_counts[n as usize] != mass {
            return violation(format!(
                "conservation broken at time {n}: {} active vs {} woken",
                record.active_counts[n as usize], mass
            ));
        }
    }
    if cursor != record.sites.len() {
        return violation("record contains sites beyond its horizon".into());
    }
    Ok(())
}
