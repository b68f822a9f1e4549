//! Rescaled visited sets, time-constant estimation, the empirical limit
//! shape `{mu <= 1}`, and the diagnostics used to watch `xi_n / n` converge.

use std::collections::BTreeSet;

use rayon::prelude::*;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::engine::{Mode, PassageRecord, RunOptions, Simulation};
use crate::error::{Error, Result};
use crate::io::{svg_cells, svg_polygon};
use crate::lattice::{diamond_size, octahedral_group, SiteCoord};
use crate::passage::occupied_ray;
use crate::randomness::{derive_seed, InitialConfigSpec};
use crate::stats::Summary;

/// Fraction of censored samples at the largest `n` above which an estimate
/// is flagged unreliable.
pub const CENSORED_LIMIT: f64 = 0.2;

/// `xi_n` seen at scale `n`: each cell stands for `(y + (-1/2, 1/2]^d) / n`.
/// Cells are relative to the source and sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RescaledSet {
    pub scale: u32,
    pub dimension: usize,
    pub cells: Vec<SiteCoord>,
}

pub fn rescale(record: &PassageRecord, n: u32) -> Result<RescaledSet> {
    if n == 0 {
        return Err(Error::invalid("n", "rescaling needs n >= 1"));
    }
    let mut cells: Vec<SiteCoord> = record
        .visited_at(n)?
        .iter()
        .map(|v| v.site - record.source)
        .collect();
    cells.sort_unstable();
    Ok(RescaledSet {
        scale: n,
        dimension: record.dimension,
        cells,
    })
}

impl RescaledSet {
    pub fn new(scale: u32, dimension: usize, cells: impl IntoIterator<Item = SiteCoord>) -> Self {
        let mut cells: Vec<SiteCoord> = cells.into_iter().collect();
        cells.sort_unstable();
        cells.dedup();
        RescaledSet {
            scale,
            dimension,
            cells,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cell centers in rescaled coordinates.
    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        let k = 1.0 / self.scale as f64;
        self.cells.iter().map(move |c| c.coords().iter().map(|&v| v as f64 * k).collect())
    }

    /// SVG rendering (2-D only).
    pub fn to_svg(&self, title: &str) -> Option<String> {
        (self.dimension == 2).then(|| svg_cells(&self.cells, self.scale as u64, title))
    }
}

/// Samples of `T(0, n x) / n` at one `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuAtScale {
    pub n: u32,
    /// One entry per replica, in replica order; `None` when censored.
    pub samples: Vec<Option<f64>>,
    pub censored: usize,
    pub summary: Option<Summary>,
}

/// Ray-subsequence estimate `mu'(x) = lim T(0, v_k x) / k`, with
/// `mu = p1 * mu'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayEstimate {
    pub k: u64,
    pub mu_prime: Summary,
    pub censored: usize,
    pub p1: f64,
    /// `p1 * mu'`, to compare with the direct estimate.
    pub p1_mu_prime: f64,
    /// Whether `p1 * mu'` lies within the combined 95% intervals of the
    /// direct estimate.
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    pub direction: SiteCoord,
    pub n_schedule: Vec<u32>,
    pub replicas: usize,
    pub horizon: u32,
    pub per_n: Vec<MuAtScale>,
    /// Mean of `T(0, n x) / n` at the largest `n`.
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub censored_at_max: usize,
    /// Too many censored samples, or fewer than two usable ones.
    pub unreliable: bool,
    pub ray: Option<RayEstimate>,
}

impl MuEstimate {
    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }

    pub fn overlaps(&self, other: &MuEstimate) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }

    pub fn at(&self, n: u32) -> Option<&MuAtScale> {
        self.per_n.iter().find(|m| m.n == n)
    }
}

#[derive(Clone, Debug)]
pub struct MuOptions {
    pub mode: Mode,
    /// Also estimate `mu'` along the occupied-ray subsequence.
    pub ray: bool,
}

impl Default for MuOptions {
    fn default() -> Self {
        MuOptions {
            mode: Mode::Identity,
            ray: false,
        }
    }
}

fn check_schedule(n_schedule: &[u32]) -> Result<()> {
    if n_schedule.is_empty() {
        return Err(Error::invalid("n_schedule", "schedule is empty"));
    }
    if n_schedule[0] == 0 || n_schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("n_schedule", "schedule must be positive and strictly increasing"));
    }
    Ok(())
}

/// One replica's observations: first passage at every `n x` and, for the
/// ray estimator, at `v_k x`.
struct ReplicaObs {
    times: Vec<Vec<Option<u32>>>,
    ray: Vec<Option<(u64, Option<u32>)>>,
}

fn ray_index(spec: &InitialConfigSpec, n_max: u32) -> u64 {
    ((spec.p1() * n_max as f64).round() as u64).max(1)
}

fn observe_replica(
    spec: &InitialConfigSpec,
    directions: &[SiteCoord],
    n_schedule: &[u32],
    horizon: u32,
    opts: &MuOptions,
) -> Result<ReplicaObs> {
    let n_max = *n_schedule.last().unwrap();
    let mut targets = Vec::new();
    for x in directions {
        for &n in n_schedule {
            targets.push(x.scaled(n as i64).ok_or_else(|| Error::invalid("n_schedule", "n x overflows"))?);
        }
    }
    let mut ray_sites = Vec::new();
    if opts.ray {
        let k = ray_index(spec, n_max);
        for x in directions {
            let ray = occupied_ray(spec, *x, k as usize)?;
            let v = ray[k as usize];
            let site = x
                .scaled(v as i64)
                .ok_or_else(|| Error::invalid("direction", "ray site overflows"))?;
            ray_sites.push((k, site));
        }
    }
    let all: Vec<SiteCoord> = targets
        .iter()
        .copied()
        .chain(ray_sites.iter().map(|r| r.1))
        .filter(|y| y.l1_norm() <= horizon as u64)
        .collect();
    let origin = SiteCoord::origin(spec.dimension);
    let record = if spec.eta_at(&origin) == 0 {
        None
    } else {
        let mut sim = Simulation::new(spec, origin, horizon, opts.mode, &RunOptions::default())?;
        sim.run_until_visited(&all)?;
        Some(sim.into_record())
    };
    let t = |y: &SiteCoord| record.as_ref().and_then(|r| r.first_passage(y));
    let times = targets
        .chunks(n_schedule.len())
        .map(|row| row.iter().map(t).collect())
        .collect();
    let ray = if opts.ray {
        ray_sites.iter().map(|(k, y)| Some((*k, t(y)))).collect()
    } else {
        vec![None; directions.len()]
    };
    Ok(ReplicaObs { times, ray })
}

/// Estimates `mu(x)` for several directions, sharing one run per replica.
/// Replica `r` uses seed `derive_seed(spec.master_seed, r)`.
pub fn estimate_mu_many(
    spec: &InitialConfigSpec,
    directions: &[SiteCoord],
    n_schedule: &[u32],
    replicas: usize,
    horizon: u32,
    opts: &MuOptions,
) -> Result<Vec<MuEstimate>> {
    spec.validate()?;
    check_schedule(n_schedule)?;
    if replicas == 0 {
        return Err(Error::invalid("replicas", "need at least one replica"));
    }
    if let Some(x) = directions.iter().find(|x| x.is_origin() || x.dim() != spec.dimension) {
        return Err(Error::invalid("directions", format!("bad direction {x}")));
    }
    let obs: Vec<ReplicaObs> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let s = spec.with_seed(derive_seed(spec.master_seed, r as u64));
            observe_replica(&s, directions, n_schedule, horizon, opts)
        })
        .collect::<Result<_>>()?;
    directions
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let per_replica: Vec<Vec<Option<u32>>> = obs.iter().map(|o| o.times[i].clone()).collect();
            let ray: Vec<Option<(u64, Option<u32>)>> = obs.iter().map(|o| o.ray[i]).collect();
            assemble(spec, x, n_schedule, horizon, &per_replica, &ray)
        })
        .collect()
}

pub fn estimate_mu(
    spec: &InitialConfigSpec,
    x: SiteCoord,
    n_schedule: &[u32],
    replicas: usize,
    horizon: u32,
) -> Result<MuEstimate> {
    Ok(estimate_mu_many(spec, &[x], n_schedule, replicas, horizon, &MuOptions::default())?.remove(0))
}

/// The same estimate from existing records (one per replica, all from the
/// origin). Passage times beyond a record's horizon count as censored.
pub fn mu_from_records(
    spec: &InitialConfigSpec,
    records: &[PassageRecord],
    x: SiteCoord,
    n_schedule: &[u32],
) -> Result<MuEstimate> {
    check_schedule(n_schedule)?;
    let horizon = records.iter().map(|r| r.horizon).max().unwrap_or(0);
    let per_replica: Vec<Vec<Option<u32>>> = records
        .iter()
        .map(|r| {
            n_schedule
                .iter()
                .map(|&n| x.scaled(n as i64).and_then(|y| r.first_passage(&y)))
                .collect()
        })
        .collect();
    assemble(spec, x, n_schedule, horizon, &per_replica, &vec![None; records.len()])
}

fn assemble(
    spec: &InitialConfigSpec,
    x: SiteCoord,
    n_schedule: &[u32],
    horizon: u32,
    per_replica: &[Vec<Option<u32>>],
    ray: &[Option<(u64, Option<u32>)>],
) -> Result<MuEstimate> {
    let replicas = per_replica.len();
    let per_n: Vec<MuAtScale> = n_schedule
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let samples: Vec<Option<f64>> = per_replica
                .iter()
                .map(|row| row[j].map(|t| t as f64 / n as f64))
                .collect();
            let values: Vec<f64> = samples.iter().flatten().copied().collect();
            MuAtScale {
                n,
                censored: replicas - values.len(),
                summary: Summary::of(&values),
                samples,
            }
        })
        .collect();
    let last = per_n.last().unwrap();
    let Some(summary) = last.summary else {
        return Err(Error::EstimationFailed(format!(
            "all {replicas} samples of T(0, {} x) for x = {x} are censored at horizon {horizon}",
            last.n
        )));
    };
    let censored_at_max = last.censored;
    let unreliable = censored_at_max as f64 > CENSORED_LIMIT * replicas as f64 || summary.count < 2;
    let ray_estimate = match ray.iter().flatten().next() {
        Some(&(k, _)) => {
            let values: Vec<f64> = ray
                .iter()
                .flatten()
                .filter_map(|(_, t)| t.map(|t| t as f64 / k as f64))
                .collect();
            Summary::of(&values).map(|mu_prime| {
                let p1 = spec.p1();
                let p1_mu_prime = p1 * mu_prime.mean;
                let slack = summary.half_width() + p1 * mu_prime.half_width();
                RayEstimate {
                    k,
                    censored: replicas - values.len(),
                    p1,
                    p1_mu_prime,
                    consistent: (p1_mu_prime - summary.mean).abs() <= slack,
                    mu_prime,
                }
            })
        }
        None => None,
    };
    Ok(MuEstimate {
        direction: x,
        n_schedule: n_schedule.to_vec(),
        replicas,
        horizon,
        per_n,
        point: summary.mean,
        ci_low: summary.ci_low,
        ci_high: summary.ci_high,
        censored_at_max,
        unreliable,
        ray: ray_estimate,
    })
}

/// All axis and diagonal directions with entries in `{-1, 0, 1}` whose first
/// nonzero entry is positive.
pub fn default_directions(d: usize) -> Vec<SiteCoord> {
    let mut out = Vec::new();
    let total = 3usize.pow(d as u32);
    for code in 0..total {
        let mut c = vec![0i32; d];
        let mut k = code;
        for v in c.iter_mut() {
            *v = (k % 3) as i32 - 1;
            k /= 3;
        }
        if let Some(&first) = c.iter().find(|&&v| v != 0) {
            if first > 0 {
                out.push(SiteCoord::from(&c));
            }
        }
    }
    out.sort_unstable_by_key(|x| (x.l1_norm(), std::cmp::Reverse(*x)));
    out
}

/// The empirical limit shape `{mu <= 1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeEstimate {
    Interval { low: f64, high: f64 },
    /// Star-shaped polygon, vertices sorted by angle.
    Polygon { vertices: Vec<[f64; 2]> },
    /// Boundary points `u / mu(u)` over the symmetrized direction set.
    Cloud { dimension: usize, points: Vec<Vec<f64>> },
}

fn rank(rows: &[Vec<f64>], d: usize) -> usize {
    let mut m: Vec<Vec<f64>> = rows.to_vec();
    let mut r = 0;
    for col in 0..d {
        let Some(p) = (r..m.len()).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())) else {
            break;
        };
        if m[p][col].abs() < 1e-9 {
            continue;
        }
        m.swap(r, p);
        for i in 0..m.len() {
            if i != r {
                let f = m[i][col] / m[r][col];
                for j in 0..d {
                    m[i][j] -= f * m[r][j];
                }
            }
        }
        r += 1;
    }
    r
}

/// Builds `{mu <= 1}` from per-direction estimates: each direction `u`
/// contributes the boundary point `u / mu(u)`, the set of points is
/// symmetrized over the hyperoctahedral group, and in 2-D the points are
/// joined in angular order.
pub fn shape_from_mu(estimates: &[MuEstimate]) -> Result<ShapeEstimate> {
    let Some(first) = estimates.first() else {
        return Err(Error::invalid("estimates", "no estimates given"));
    };
    let d = first.direction.dim();
    if estimates.iter().any(|e| e.direction.dim() != d) {
        return Err(Error::invalid("estimates", "mixed dimensions"));
    }
    if let Some(e) = estimates.iter().find(|e| !(e.point.is_finite() && e.point > 0.0)) {
        return Err(Error::invalid("estimates", format!("estimate for {} is not finite", e.direction)));
    }
    let rows: Vec<Vec<f64>> = estimates.iter().map(|e| e.direction.as_f64()).collect();
    if rank(&rows, d) < d {
        return Err(Error::invalid("directions", format!("directions do not span R^{d}")));
    }
    let boundary: Vec<Vec<f64>> = estimates
        .iter()
        .map(|e| e.direction.as_f64().iter().map(|v| v / e.point).collect())
        .collect();
    let group = octahedral_group(d);
    match d {
        1 => {
            let r = boundary.iter().map(|b| b[0].abs()).sum::<f64>() / boundary.len() as f64;
            Ok(ShapeEstimate::Interval { low: -r, high: r })
        }
        2 => {
            // average radii of points that land on the same ray
            let mut by_angle: Vec<(f64, f64, usize)> = Vec::new();
            for b in &boundary {
                for g in &group {
                    let p = g.apply_f64(b);
                    let theta = p[1].atan2(p[0]);
                    let r = p[0].hypot(p[1]);
                    match by_angle.iter_mut().find(|a| angle_eq(a.0, theta)) {
                        Some(a) => {
                            a.1 += r;
                            a.2 += 1;
                        }
                        None => by_angle.push((theta, r, 1)),
                    }
                }
            }
            by_angle.sort_by(|a, b| a.0.total_cmp(&b.0));
            let vertices = by_angle
                .iter()
                .map(|&(theta, r, k)| {
                    let r = r / k as f64;
                    [clean(r * theta.cos()), clean(r * theta.sin())]
                })
                .collect();
            Ok(ShapeEstimate::Polygon { vertices })
        }
        _ => {
            let mut seen: Vec<Vec<f64>> = Vec::new();
            for b in &boundary {
                for g in &group {
                    let p: Vec<f64> = g.apply_f64(b).into_iter().map(clean).collect();
                    if !seen.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-12)) {
                        seen.push(p);
                    }
                }
            }
            seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Ok(ShapeEstimate::Cloud {
                dimension: d,
                points: seen,
            })
        }
    }
}

fn angle_eq(a: f64, b: f64) -> bool {
    let diff = (a - b).abs();
    diff < 1e-9 || (diff - std::f64::consts::TAU).abs() < 1e-9
}

fn clean(v: f64) -> f64 {
    if v.abs() < 1e-12 {
        0.0
    } else {
        v
    }
}

impl ShapeEstimate {
    /// Whether a point lies in the shape (`None` in dimension 3 and up).
    pub fn contains(&self, p: &[f64]) -> Option<bool> {
        match self {
            ShapeEstimate::Interval { low, high } => Some(*low <= p[0] && p[0] <= *high),
            ShapeEstimate::Polygon { .. } => {
                let r = p[0].hypot(p[1]);
                if r == 0.0 {
                    return Some(true);
                }
                Some(r <= self.radius([p[0] / r, p[1] / r])?.unwrap_or(0.0) + 1e-12)
            }
            ShapeEstimate::Cloud { .. } => None,
        }
    }

    /// Distance from the origin to the boundary along the unit vector `u`.
    pub fn radius(&self, u: [f64; 2]) -> Option<Option<f64>> {
        let ShapeEstimate::Polygon { vertices } = self else {
            return None;
        };
        let n = vertices.len();
        if n < 3 {
            return Some(None);
        }
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            // solve t u = a + s (b - a) with s in [0, 1], t >= 0
            let e = [b[0] - a[0], b[1] - a[1]];
            let det = u[0] * (-e[1]) - u[1] * (-e[0]);
            if det.abs() < 1e-15 {
                continue;
            }
            let t = (a[0] * (-e[1]) - a[1] * (-e[0])) / det;
            let s = (u[0] * a[1] - u[1] * a[0]) / det;
            if t >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s) {
                return Some(Some(t));
            }
        }
        Some(None)
    }

    pub fn to_svg(&self, title: &str) -> Option<String> {
        match self {
            ShapeEstimate::Polygon { vertices } => Some(svg_polygon(vertices, title)),
            _ => None,
        }
    }
}

/// Finite-`n` diagnostics for `xi_n / n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeMetrics {
    pub scale: u32,
    pub size: usize,
    /// `|xi_n ∩ D_n| / |D_n|`.
    pub coverage: f64,
    /// Largest `|g xi \ xi| / |xi|` over the hyperoctahedral group, i.e.
    /// half of `|g xi Δ xi| / |xi|`.
    pub symmetry_defect: f64,
    /// Fraction of lattice points in the convex hull of `xi_n` that are not
    /// in `xi_n` (computed in dimensions 1 and 2).
    pub convexity_defect: Option<f64>,
    pub hausdorff_to_reference: Option<f64>,
}

pub fn metrics(set: &RescaledSet, reference: Option<&RescaledSet>) -> Result<ShapeMetrics> {
    if set.is_empty() {
        return Err(Error::invalid("set", "metrics need a nonempty set"));
    }
    let n = set.scale as u64;
    let lookup: FxHashSet<SiteCoord> = set.cells.iter().copied().collect();
    let inside = set.cells.iter().filter(|c| c.l1_norm() <= n).count();
    let coverage = inside as f64 / diamond_size(set.dimension, n)? as f64;
    let mut worst = 0usize;
    for g in octahedral_group(set.dimension).iter().skip(1) {
        let missing = set.cells.iter().filter(|c| !lookup.contains(&g.apply(c))).count();
        worst = worst.max(missing);
    }
    let symmetry_defect = worst as f64 / set.len() as f64;
    let convexity_defect = convexity_defect(set, &lookup);
    let hausdorff_to_reference = match reference {
        Some(r) => Some(hausdorff_l1(set, r)?),
        None => None,
    };
    Ok(ShapeMetrics {
        scale: set.scale,
        size: set.len(),
        coverage,
        symmetry_defect,
        convexity_defect,
        hausdorff_to_reference,
    })
}

fn convexity_defect(set: &RescaledSet, lookup: &FxHashSet<SiteCoord>) -> Option<f64> {
    match set.dimension {
        1 => {
            let lo = set.cells.first()?.coord(0) as i64;
            let hi = set.cells.last()?.coord(0) as i64;
            let hull = (hi - lo + 1) as f64;
            Some((hull - set.len() as f64) / hull)
        }
        2 => {
            let pts: Vec<(i64, i64)> = set.cells.iter().map(|c| (c.coord(0) as i64, c.coord(1) as i64)).collect();
            let hull = convex_hull(&pts);
            let (ymin, ymax) = (
                hull.iter().map(|p| p.1).min()?,
                hull.iter().map(|p| p.1).max()?,
            );
            let mut in_hull = 0u64;
            let mut missing = 0u64;
            for y in ymin..=ymax {
                let Some((xl, xr)) = hull_row(&hull, y) else { continue };
                for x in xl..=xr {
                    in_hull += 1;
                    if !lookup.contains(&SiteCoord::from(&[x as i32, y as i32])) {
                        missing += 1;
                    }
                }
            }
            Some(missing as f64 / in_hull as f64)
        }
        _ => None,
    }
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
fn convex_hull(points: &[(i64, i64)]) -> Vec<(i64, i64)> {
    let mut p = points.to_vec();
    p.sort_unstable();
    p.dedup();
    if p.len() <= 2 {
        return p;
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Integer x-range of the hull at height `y` (exact rational bounds).
fn hull_row(hull: &[(i64, i64)], y: i64) -> Option<(i64, i64)> {
    if hull.len() == 1 {
        return (hull[0].1 == y).then_some((hull[0].0, hull[0].0));
    }
    let mut lo = i64::MAX;
    let mut hi = i64::MIN;
    let n = hull.len();
    for i in 0..n {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        if (a.1 < y && b.1 < y) || (a.1 > y && b.1 > y) {
            continue;
        }
        if a.1 == b.1 {
            lo = lo.min(a.0.min(b.0));
            hi = hi.max(a.0.max(b.0));
            continue;
        }
        // x = a.0 + (y - a.1) (b.0 - a.0) / (b.1 - a.1)
        let num = a.0 * (b.1 - a.1) + (y - a.1) * (b.0 - a.0);
        let den = b.1 - a.1;
        let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
        lo = lo.min(num.div_euclid(den) + i64::from(num.rem_euclid(den) != 0));
        hi = hi.max(num.div_euclid(den));
    }
    (lo <= hi).then_some((lo, hi))
}

/// Points of `Z^d` at L1 distance exactly `r` from `center`.
fn l1_sphere(center: SiteCoord, r: u64, out: &mut Vec<SiteCoord>) {
    fn rec(d: usize, axis: usize, left: i64, cur: &mut [i32; 4], center: &SiteCoord, out: &mut Vec<SiteCoord>) {
        if axis == d - 1 {
            for v in if left == 0 { vec![0] } else { vec![left, -left] } {
                cur[axis] = v as i32;
                let off = SiteCoord::new(&cur[..d]).unwrap();
                out.push(*center + off);
            }
            return;
        }
        for v in -left..=left {
            cur[axis] = v as i32;
            rec(d, axis + 1, left - v.abs(), cur, center, out);
        }
    }
    out.clear();
    let mut cur = [0i32; 4];
    rec(center.dim(), 0, r as i64, &mut cur, &center, out);
}

/// Largest distance from a point of `a` to the set `b`, in `b`'s lattice units.
fn directed_hausdorff(a: &RescaledSet, b: &RescaledSet, b_lookup: &FxHashSet<SiteCoord>) -> f64 {
    let ratio = b.scale as f64 / a.scale as f64;
    let mut worst = 0.0f64;
    let mut shell = Vec::new();
    for c in &a.cells {
        let p: Vec<f64> = c.coords().iter().map(|&v| v as f64 * ratio).collect();
        let center = SiteCoord::new(&p.iter().map(|v| v.round() as i32).collect::<Vec<_>>()).unwrap();
        let offset: f64 = p.iter().zip(center.coords()).map(|(v, &q)| (v - q as f64).abs()).sum();
        let mut best = f64::INFINITY;
        let mut r = 0u64;
        // every point on shell r is at least r - offset away
        while (r as f64 - offset) < best {
            l1_sphere(center, r, &mut shell);
            for q in &shell {
                if b_lookup.contains(q) {
                    let dist: f64 = p.iter().zip(q.coords()).map(|(v, &w)| (v - w as f64).abs()).sum();
                    best = best.min(dist);
                }
            }
            r += 1;
        }
        worst = worst.max(best);
    }
    worst
}

/// Symmetric L1 Hausdorff distance between the rescaled cell-center sets.
pub fn hausdorff_l1(a: &RescaledSet, b: &RescaledSet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("set", "hausdorff distance needs nonempty sets"));
    }
    if a.dimension != b.dimension {
        return Err(Error::invalid("set", "dimension mismatch"));
    }
    let la: FxHashSet<SiteCoord> = a.cells.iter().copied().collect();
    let lb: FxHashSet<SiteCoord> = b.cells.iter().copied().collect();
    let ab = directed_hausdorff(a, b, &lb) / b.scale as f64;
    let ba = directed_hausdorff(b, a, &la) / a.scale as f64;
    Ok(ab.max(ba))
}

/// Orbit of every cell, for building symmetric reference sets.
pub fn symmetrize(set: &RescaledSet) -> RescaledSet {
    let group = octahedral_group(set.dimension);
    let all: BTreeSet<SiteCoord> = set.cells.iter().flat_map(|c| group.iter().map(move |g| g.apply(c))).collect();
    RescaledSet::new(set.scale, set.dimension, all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run;
    use crate::lattice::Diamond;
    use crate::randomness::Family;

    fn full_diamond(d: usize, n: u32) -> RescaledSet {
        RescaledSet::new(n, d, Diamond::new(d, n as u64).unwrap().members())
    }

    #[test]
    fn rescale_basics() {
        let spec = InitialConfigSpec::new(1, Family::Constant { c: 1 }, 2);
        let r = run(&spec, SiteCoord::origin(1), 30, Mode::Identity).unwrap();
        assert!(rescale(&r, 0).is_err());
        let one = rescale(&r, 1).unwrap();
        assert!(one.cells.iter().all(|c| c.l1_norm() <= 1));
        for n in 2..=30 {
            let a = rescale(&r, n - 1).unwrap();
            let b = rescale(&r, n).unwrap();
            assert!(a.cells.iter().all(|c| b.cells.binary_search(c).is_ok()));
            assert!(b.cells.iter().all(|c| c.l1_norm() <= n as u64));
        }
    }

    #[test]
    fn metrics_of_full_diamond() {
        for d in 1..=3 {
            let m = metrics(&full_diamond(d, 6), None).unwrap();
            assert_eq!(m.coverage, 1.0);
            assert_eq!(m.symmetry_defect, 0.0);
            if d <= 2 {
                assert_eq!(m.convexity_defect, Some(0.0));
            }
        }
        let single = RescaledSet::new(5, 2, [SiteCoord::origin(2)]);
        let m = metrics(&single, Some(&single)).unwrap();
        assert_eq!(m.coverage, 1.0 / 61.0);
        assert_eq!(m.hausdorff_to_reference, Some(0.0));
        assert!(metrics(&RescaledSet::new(5, 2, []), None).is_err());
    }

    #[test]
    fn symmetry_and_convexity_defects() {
        // an L-shape: {(0,0), (1,0), (0,1)} has hull containing no extra
        // lattice points, and reflecting x -> -x moves two of three cells out
        let l = RescaledSet::new(1, 2, [[0, 0], [1, 0], [0, 1]].map(|c| SiteCoord::from(&c)));
        let m = metrics(&l, None).unwrap();
        assert_eq!(m.convexity_defect, Some(0.0));
        assert!((m.symmetry_defect - 2.0 / 3.0).abs() < 1e-12);
        // a gap: {-2, 2} on the line misses 3 of 5 hull points
        let gap = RescaledSet::new(1, 1, [SiteCoord::from(&[-2]), SiteCoord::from(&[2])]);
        assert_eq!(metrics(&gap, None).unwrap().convexity_defect, Some(0.6));
        // a ring misses its center
        let ring = RescaledSet::new(1, 2, SiteCoord::origin(2).neighbors());
        assert_eq!(metrics(&ring, None).unwrap().convexity_defect, Some(0.2));
    }

    #[test]
    fn hausdorff_examples() {
        let n = 7;
        let a = RescaledSet::new(n, 2, [SiteCoord::origin(2)]);
        let b = RescaledSet::new(n, 2, [SiteCoord::origin(2), SiteCoord::from(&[1, 0])]);
        assert_eq!(hausdorff_l1(&a, &a).unwrap(), 0.0);
        assert!((hausdorff_l1(&a, &b).unwrap() - 1.0 / n as f64).abs() < 1e-12);
        assert_eq!(hausdorff_l1(&a, &b).unwrap(), hausdorff_l1(&b, &a).unwrap());
        // same shape at two scales
        let small = full_diamond(2, 10);
        let large = full_diamond(2, 20);
        assert!(hausdorff_l1(&small, &large).unwrap() < 0.1 + 1e-12);
        let far = RescaledSet::new(1, 2, [SiteCoord::from(&[5, -3])]);
        assert_eq!(hausdorff_l1(&a, &far).unwrap(), 8.0);
    }

    #[test]
    fn hausdorff_matches_brute_force() {
        let spec = InitialConfigSpec::new(2, Family::Bernoulli { p: 0.4 }, 13).conditioned();
        let r = run(&spec, SiteCoord::origin(2), 24, Mode::Identity).unwrap();
        let a = rescale(&r, 12).unwrap();
        let b = rescale(&r, 24).unwrap();
        let brute = |x: &RescaledSet, y: &RescaledSet| {
            x.points()
                .map(|p| {
                    y.points()
                        .map(|q| p.iter().zip(&q).map(|(u, v)| (u - v).abs()).sum::<f64>())
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max)
        };
        let expected = brute(&a, &b).max(brute(&b, &a));
        assert!((hausdorff_l1(&a, &b).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn shape_of_exact_norm_is_the_diamond() {
        let fake = |x: SiteCoord| MuEstimate {
            direction: x,
            n_schedule: vec![1],
            replicas: 1,
            horizon: 1,
            per_n: vec![],
            point: x.l1_norm() as f64,
            ci_low: x.l1_norm() as f64,
            ci_high: x.l1_norm() as f64,
            censored_at_max: 0,
            unreliable: false,
            ray: None,
        };
        let ests: Vec<MuEstimate> = default_directions(2).into_iter().map(fake).collect();
        let shape = shape_from_mu(&ests).unwrap();
        for (p, inside) in [([0.5, 0.5], true), ([0.0, 0.99], true), ([0.6, 0.5], false), ([1.01, 0.0], false)] {
            assert_eq!(shape.contains(&p), Some(inside), "{p:?}");
        }
        for theta in 0..64 {
            let a = theta as f64 * std::f64::consts::TAU / 64.0;
            let u = [a.cos(), a.sin()];
            let r = shape.radius(u).unwrap().unwrap();
            assert!((r * (u[0].abs() + u[1].abs()) - 1.0).abs() < 1e-9);
        }
        let one = shape_from_mu(&[MuEstimate {
            point: 1.25,
            ..fake(SiteCoord::from(&[1]))
        }])
        .unwrap();
        assert_eq!(one, ShapeEstimate::Interval { low: -0.8, high: 0.8 });
        assert!(shape_from_mu(&[fake(SiteCoord::from(&[1, 1]))]).is_err());
    }

    #[test]
    fn shape_polygon_is_sign_symmetric() {
        let est = |c: [i32; 2], mu: f64| MuEstimate {
            direction: SiteCoord::from(&c),
            n_schedule: vec![1],
            replicas: 1,
            horizon: 1,
            per_n: vec![],
            point: mu,
            ci_low: mu,
            ci_high: mu,
            censored_at_max: 0,
            unreliable: false,
            ray: None,
        };
        let shape = shape_from_mu(&[est([1, 0], 1.3), est([1, 1], 2.2), est([2, 1], 3.1)]).unwrap();
        let ShapeEstimate::Polygon { vertices } = &shape else { panic!() };
        for v in vertices {
            for flipped in [[-v[0], v[1]], [v[0], -v[1]], [v[1], v[0]]] {
                assert!(vertices
                    .iter()
                    .any(|w| (w[0] - flipped[0]).abs() < 1e-12 && (w[1] - flipped[1]).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn mu_estimate_is_deterministic_and_above_norm() {
        let spec = InitialConfigSpec::new(2, Family::Constant { c: 1 }, 5);
        let x = SiteCoord::from(&[1, 0]);
        let a = estimate_mu(&spec, x, &[10, 20], 8, 200).unwrap();
        let b = estimate_mu(&spec, x, &[10, 20], 8, 200).unwrap();
        assert_eq!(a, b);
        assert!(a.point >= 1.0);
        assert!(a.ci_high >= 1.0);
        assert_eq!(a.censored_at_max, 0);
        assert!(estimate_mu(&spec, x, &[20, 10], 8, 200).is_err());
        assert!(matches!(
            estimate_mu(&spec, x, &[10, 20], 4, 15),
            Err(Error::EstimationFailed(_))
        ));
    }

    #[test]
    fn mu_from_records_matches_direct_estimate() {
        let spec = InitialConfigSpec::new(2, Family::Bernoulli { p: 0.6 }, 3).conditioned();
        let x = SiteCoord::from(&[0, 1]);
        let direct = estimate_mu(&spec, x, &[5, 10], 6, 120).unwrap();
        let records: Vec<PassageRecord> = (0..6)
            .map(|r| {
                let s = spec.with_seed(derive_seed(spec.master_seed, r));
                run(&s, SiteCoord::origin(2), 120, Mode::Identity).unwrap()
            })
            .collect();
        let from = mu_from_records(&spec, &records, x, &[5, 10]).unwrap();
        assert_eq!(direct.per_n, from.per_n);
        assert_eq!(direct.point, from.point);
    }

    #[test]
    fn ray_estimate_for_full_occupation_equals_direct() {
        let spec = InitialConfigSpec::new(2, Family::Constant { c: 1 }, 8);
        let opts = MuOptions {
            ray: true,
            ..MuOptions::default()
        };
        let est = estimate_mu_many(&spec, &[SiteCoord::from(&[1, 0])], &[8, 16], 5, 200, &opts).unwrap();
        let ray = est[0].ray.as_ref().unwrap();
        assert_eq!(ray.k, 16);
        assert!((ray.p1_mu_prime - est[0].point).abs() < 1e-12);
        assert!(ray.consistent);
    }

    #[test]
    fn default_direction_counts() {
        assert_eq!(default_directions(1), vec![SiteCoord::from(&[1])]);
        assert_eq!(default_directions(2).len(), 4);
        assert_eq!(default_directions(3).len(), 13);
        assert_eq!(default_directions(2)[0], SiteCoord::from(&[1, 0]));
    }

    #[test]
    fn hull_rows_are_exact() {
        let tri = convex_hull(&[(0, 0), (4, 0), (0, 4), (1, 1)]);
        assert_eq!(tri.len(), 3);
        assert_eq!(hull_row(&tri, 0), Some((0, 4)));
        assert_eq!(hull_row(&tri, 3), Some((0, 1)));
        assert_eq!(hull_row(&tri, 5), None);
    }
}
