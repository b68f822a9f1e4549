//! Exact first-passage probabilities for tiny finite configurations, by
//! enumerating every joint outcome of the walks with rational weights.
//!
//! The waking rule is the engine's: all active particles move, then every
//! never-visited occupied position is marked and its sleepers join the next
//! step. Particles are enumerated in `(origin, index)` order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::lattice::{check_dimension, SiteCoord};

pub type Prob = Ratio<u128>;

/// Default cap on the number of enumerated leaves.
pub const DEFAULT_LEAF_BUDGET: u128 = 10_000_000;

/// A configuration with finitely many particles; every unlisted site is empty.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteConfig {
    pub dimension: usize,
    pub occupancy: BTreeMap<SiteCoord, u64>,
    pub source: SiteCoord,
}

impl FiniteConfig {
    pub fn new(dimension: usize, source: SiteCoord, sites: impl IntoIterator<Item = (SiteCoord, u64)>) -> Self {
        let mut occupancy = BTreeMap::new();
        for (x, c) in sites {
            if c > 0 {
                *occupancy.entry(x).or_insert(0) += c;
            }
        }
        FiniteConfig {
            dimension,
            occupancy,
            source,
        }
    }

    /// `count` particles on every site of `[lo, hi]` in one dimension.
    pub fn interval(lo: i32, hi: i32, count: u64) -> Self {
        Self::new(1, SiteCoord::origin(1), (lo..=hi).map(|i| (SiteCoord::from(&[i]), count)))
    }

    pub fn eta(&self, x: &SiteCoord) -> u64 {
        self.occupancy.get(x).copied().unwrap_or(0)
    }

    /// Upper bound on the leaves of the outcome tree: a particle at distance
    /// `r` from the source cannot wake before time `r`, so it makes at most
    /// `horizon - r` moves, each splitting `2d` ways.
    pub fn leaf_bound(&self, horizon: u32) -> Option<u128> {
        let mut moves: u128 = 0;
        for (x, &c) in &self.occupancy {
            let r = x.l1_dist(&self.source);
            moves = moves.checked_add(c as u128 * (horizon as u64).saturating_sub(r) as u128)?;
        }
        (2 * self.dimension as u128).checked_pow(u32::try_from(moves).ok()?)
    }

    fn validate(&self) -> Result<()> {
        check_dimension(self.dimension).map_err(|_| Error::invalid("config.dimension", "must be in 1..=4"))?;
        if self.source.dim() != self.dimension {
            return Err(Error::invalid("config.source", "dimension mismatch"));
        }
        if let Some((x, _)) = self.occupancy.iter().find(|(x, _)| x.dim() != self.dimension) {
            return Err(Error::invalid("config.occupancy", format!("site {x} has the wrong dimension")));
        }
        Ok(())
    }
}

/// Exact laws of first passage up to a horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleResult {
    pub horizon: u32,
    /// `P[T(source, y) <= n]` for `n = 0..=horizon`, for every reachable `y`.
    pub passage_cdf: BTreeMap<SiteCoord, Vec<Prob>>,
    /// Law of `|xi_horizon|`.
    pub visited_size: BTreeMap<usize, Prob>,
    /// Number of enumerated leaves.
    pub leaves: u128,
}

impl OracleResult {
    /// `P[T(source, y) <= n]`; zero for sites never reached.
    pub fn prob_within(&self, y: &SiteCoord, n: u32) -> Prob {
        assert!(n <= self.horizon, "n beyond the oracle horizon");
        self.passage_cdf
            .get(y)
            .map(|v| v[n as usize])
            .unwrap_or_else(|| Prob::from_integer(0))
    }

    /// CSV with columns `x1..xd,numerator,denominator,probability` for the
    /// event `T(source, y) <= horizon`.
    pub fn to_csv_string(&self, dimension: usize) -> String {
        let mut out = String::new();
        let cols: Vec<String> = (1..=dimension)
            .map(|i| format!("x{i}"))
            .chain(["numerator", "denominator", "probability"].map(String::from))
            .collect();
        out.push_str(&cols.join(","));
        out.push('\n');
        for (y, cdf) in &self.passage_cdf {
            let p = cdf[self.horizon as usize];
            let coords: Vec<String> = y.coords().iter().map(|c| c.to_string()).collect();
            let _ = writeln!(
                out,
                "{},{},{},{}",
                coords.join(","),
                p.numer(),
                p.denom(),
                to_f64(&p)
            );
        }
        out
    }

    pub fn write_csv(&self, dimension: usize, path: &Path) -> Result<()> {
        atomic_write(path, self.to_csv_string(dimension).as_bytes())
    }
}

pub fn to_f64(p: &Prob) -> f64 {
    *p.numer() as f64 / *p.denom() as f64
}

struct Walk<'a> {
    config: &'a FiniteConfig,
    horizon: u32,
    dirs: usize,
    /// hits[y][t]: probability that y is first visited at t
    hits: BTreeMap<SiteCoord, Vec<Prob>>,
    sizes: BTreeMap<usize, Prob>,
    total: Prob,
    leaves: u128,
}

impl Walk<'_> {
    fn dfs(&mut self, t: u32, actives: &[SiteCoord], visited: &mut Vec<(SiteCoord, u32)>, weight: Prob) {
        if t == self.horizon || actives.is_empty() {
            self.leaves += 1;
            self.total += weight;
            *self.sizes.entry(visited.len()).or_insert_with(|| Prob::from_integer(0)) += weight;
            for &(y, ty) in visited.iter() {
                let row = self
                    .hits
                    .entry(y)
                    .or_insert_with(|| vec![Prob::from_integer(0); self.horizon as usize + 1]);
                row[ty as usize] += weight;
            }
            return;
        }
        let n = actives.len();
        let branch = (self.dirs as u128).pow(n as u32);
        let child_weight = weight / Prob::from_integer(branch);
        let mut choice = vec![0usize; n];
        let mut moved = vec![SiteCoord::origin(self.config.dimension); n];
        loop {
            for (i, (&x, &c)) in actives.iter().zip(&choice).enumerate() {
                moved[i] = x.step(c / 2, if c % 2 == 0 { 1 } else { -1 });
            }
            let mut fresh: Vec<SiteCoord> = moved
                .iter()
                .copied()
                .filter(|y| !visited.iter().any(|(v, _)| v == y))
                .collect();
            fresh.sort_unstable();
            fresh.dedup();
            let mut next = moved.clone();
            let mark = visited.len();
            for &y in &fresh {
                visited.push((y, t + 1));
                next.extend(std::iter::repeat_n(y, self.config.eta(&y) as usize));
            }
            self.dfs(t + 1, &next, visited, child_weight);
            visited.truncate(mark);
            // odometer over the joint moves
            let mut i = 0;
            loop {
                if i == n {
                    return;
                }
                choice[i] += 1;
                if choice[i] < self.dirs {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }
}

/// Exact `P[T(source, y) <= n]` for all `y` and `n <= horizon`.
pub fn exact_passage_distribution(config: &FiniteConfig, horizon: u32, budget: u128) -> Result<OracleResult> {
    config.validate()?;
    let bound = config.leaf_bound(horizon).unwrap_or(u128::MAX);
    if bound > budget {
        return Err(Error::OracleBudget { leaves: bound, budget });
    }
    let mut walk = Walk {
        config,
        horizon,
        dirs: 2 * config.dimension,
        hits: BTreeMap::new(),
        sizes: BTreeMap::new(),
        total: Prob::from_integer(0),
        leaves: 0,
    };
    let eta0 = config.eta(&config.source);
    let mut visited = Vec::new();
    if eta0 > 0 {
        visited.push((config.source, 0));
    }
    let actives = vec![config.source; eta0 as usize];
    walk.dfs(0, &actives, &mut visited, Prob::from_integer(1));
    if walk.total != Prob::from_integer(1) {
        return Err(Error::InvariantViolation(format!(
            "oracle outcome weights sum to {} instead of 1",
            walk.total
        )));
    }
    let passage_cdf = walk
        .hits
        .into_iter()
        .map(|(y, mut row)| {
            for t in 1..row.len() {
                let prev = row[t - 1];
                row[t] += prev;
            }
            (y, row)
        })
        .collect();
    Ok(OracleResult {
        horizon,
        passage_cdf,
        visited_size: walk.sizes,
        leaves: walk.leaves,
    })
}
