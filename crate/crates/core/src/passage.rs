//! Passage times between arbitrary sites on shared randomness.
//!
//! `T(x, y)` is computed by running the process started from `x` alone on the
//! same configuration. Every particle follows its own fixed stream from the
//! moment it wakes, so comparisons between runs from different sources (or
//! with particles added) hold realization by realization, not just in law.

use serde::{Deserialize, Serialize};

use crate::engine::{Mode, PassageRecord, RunOptions, Simulation};
use crate::error::{Error, Result};
use crate::lattice::SiteCoord;
use crate::randomness::{bounded, keyed_word, stream_step, tag, InitialConfigSpec};

/// A passage time that may be cut off by the simulation horizon.
///
/// Ordering: every finite value is below `Censored`, which is below
/// `Infinite` (no particle at the starting site).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensoredTime {
    Finite(u32),
    Censored { horizon: u32 },
    Infinite,
}

impl CensoredTime {
    pub fn finite(&self) -> Option<u32> {
        match *self {
            CensoredTime::Finite(t) => Some(t),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, CensoredTime::Finite(_))
    }

    /// `None` means not observed by `horizon`.
    pub fn from_option(t: Option<u32>, horizon: u32) -> Self {
        match t {
            Some(t) => CensoredTime::Finite(t),
            None => CensoredTime::Censored { horizon },
        }
    }
}

impl std::fmt::Display for CensoredTime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CensoredTime::Finite(t) => write!(f, "{t}"),
            CensoredTime::Censored { horizon } => write!(f, ">{horizon}"),
            CensoredTime::Infinite => write!(f, "inf"),
        }
    }
}

/// `T(x, y)`: first time the process started from `x` visits `y`.
pub fn passage_time(spec: &InitialConfigSpec, x: SiteCoord, y: SiteCoord, horizon: u32) -> Result<CensoredTime> {
    Ok(passage_times(spec, x, &[y], horizon)?[0])
}

/// `T(x, y)` for several targets from one run (stops once all are visited).
pub fn passage_times(
    spec: &InitialConfigSpec,
    x: SiteCoord,
    targets: &[SiteCoord],
    horizon: u32,
) -> Result<Vec<CensoredTime>> {
    if spec.eta_at(&x) == 0 {
        return Ok(vec![CensoredTime::Infinite; targets.len()]);
    }
    // targets beyond the speed limit cannot be reached; don't simulate for them
    let reachable: Vec<SiteCoord> = targets
        .iter()
        .copied()
        .filter(|y| y.l1_dist(&x) <= horizon as u64)
        .collect();
    let mut sim = Simulation::new(spec, x, horizon, Mode::Identity, &RunOptions::default())?;
    sim.run_until_visited(&reachable)?;
    let record = sim.into_record();
    Ok(targets
        .iter()
        .map(|y| CensoredTime::from_option(record.first_passage(y), horizon))
        .collect())
}

/// `T(x, y)` for real points: each point is replaced by the site whose unit
/// cell `y + (-1/2, 1/2]^d` contains it.
pub fn passage_time_real(spec: &InitialConfigSpec, x: &[f64], y: &[f64], horizon: u32) -> Result<CensoredTime> {
    let xs = SiteCoord::containing_cell(x)?;
    let ys = SiteCoord::containing_cell(y)?;
    passage_time(spec, xs, ys, horizon)
}

/// `t(x, z)`: first time one of the particles born at `x` stands on `z`,
/// following their streams from time 0 with no waking.
pub fn t_single(spec: &InitialConfigSpec, x: SiteCoord, z: SiteCoord, horizon: u32) -> CensoredTime {
    let eta = spec.eta_at(&x);
    if eta == 0 {
        return CensoredTime::Infinite;
    }
    if x == z {
        return CensoredTime::Finite(0);
    }
    let d = spec.dimension;
    let mut best: Option<u32> = None;
    for k in 1..=eta {
        let key = spec.stream_key(&x, k);
        let limit = best.unwrap_or(horizon);
        let mut pos = x;
        for n in 1..=limit {
            pos = stream_step(key, n as u64, d).apply(pos);
            // the remaining steps can't close the gap
            if pos.l1_dist(&z) > (limit - n) as u64 {
                break;
            }
            if pos == z {
                best = Some(n);
                break;
            }
        }
    }
    CensoredTime::from_option(best, horizon)
}

/// Sum of `t_single` along a chain of sites: an upper bound for `T(x0, xm)`.
pub fn chain_time(spec: &InitialConfigSpec, chain: &[SiteCoord], horizon: u32) -> CensoredTime {
    let mut total = 0u32;
    for w in chain.windows(2) {
        match t_single(spec, w[0], w[1], horizon) {
            CensoredTime::Finite(t) => total = total.saturating_add(t),
            other => return other,
        }
    }
    if total > horizon {
        CensoredTime::Censored { horizon }
    } else {
        CensoredTime::Finite(total)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    /// A right-hand term is unknown (censored or infinite), so the
    /// inequality cannot be checked on this realization.
    Vacuous,
    Violated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subadditivity {
    pub verdict: Verdict,
    pub t_xz: CensoredTime,
    pub t_xy: CensoredTime,
    pub t_yz: CensoredTime,
}

/// Compares `T(x,z)` with `T(x,y) + T(y,z)`.
pub fn judge(t_xz: CensoredTime, t_xy: CensoredTime, t_yz: CensoredTime, horizon: u32) -> Verdict {
    let (Some(a), Some(b)) = (t_xy.finite(), t_yz.finite()) else {
        return Verdict::Vacuous;
    };
    let sum = a as u64 + b as u64;
    match t_xz {
        CensoredTime::Finite(c) if c as u64 <= sum => Verdict::Holds,
        CensoredTime::Finite(_) => Verdict::Violated,
        // within the horizon the left side would have been observed
        _ if sum <= horizon as u64 => Verdict::Violated,
        _ => Verdict::Vacuous,
    }
}

/// Checks `T(x,z) <= T(x,y) + T(y,z)` on one realization.
pub fn subadditivity_check(
    spec: &InitialConfigSpec,
    x: SiteCoord,
    y: SiteCoord,
    z: SiteCoord,
    horizon: u32,
) -> Result<Subadditivity> {
    let from_x = passage_times(spec, x, &[y, z], horizon)?;
    let t_yz = passage_time(spec, y, z, horizon)?;
    let (t_xy, t_xz) = (from_x[0], from_x[1]);
    Ok(Subadditivity {
        verdict: judge(t_xz, t_xy, t_yz, horizon),
        t_xz,
        t_xy,
        t_yz,
    })
}

/// Largest ray index scanned before giving up on finding an occupied site.
pub const RAY_SCAN_LIMIT: u64 = 1 << 24;

/// `v_0 = 0, v_1, ..., v_count`: the multiples `n` with `eta(n x) >= 1`.
pub fn occupied_ray(spec: &InitialConfigSpec, x: SiteCoord, count: usize) -> Result<Vec<u64>> {
    if x.is_origin() {
        return Err(Error::invalid("x", "the ray direction must be nonzero"));
    }
    if spec.overrides.is_none() && spec.extra.is_empty() && spec.p1() <= 0.0 {
        return Err(Error::Precondition(
            "P[eta >= 1] = 0: the ray is never occupied".into(),
        ));
    }
    let mut ray = Vec::with_capacity(count + 1);
    ray.push(0u64);
    let mut n = 0u64;
    while ray.len() <= count {
        let start = n;
        loop {
            n += 1;
            if n - start > RAY_SCAN_LIMIT {
                return Err(Error::EstimationFailed(format!(
                    "no occupied site among {RAY_SCAN_LIMIT} multiples of {x} after {start}"
                )));
            }
            let site = x
                .scaled(n as i64)
                .ok_or_else(|| Error::invalid("x", format!("multiple {n} of {x} overflows")))?;
            if spec.eta_at(&site) >= 1 {
                break;
            }
        }
        ray.push(n);
    }
    Ok(ray)
}

/// Outcome of following one particle from `y` to the next occupied site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WakeTransit {
    /// `U_y`: steps from `T(0,y)` until the chosen particle stands on an
    /// initially occupied site.
    pub u: CensoredTime,
    /// Where it stopped (`None` when censored).
    pub landing: Option<SiteCoord>,
    /// The particle that was followed, as `(origin, index)`.
    pub particle: (SiteCoord, u64),
}

/// Follows one particle standing at `y` at time `T(source, y)` until it first
/// reaches a site with `eta >= 1`. When several particles are at `y` the
/// choice is uniform, keyed by the spec seed and `y`. `horizon` bounds the
/// absolute arrival time.
pub fn wake_transit(
    spec: &InitialConfigSpec,
    record: &PassageRecord,
    y: SiteCoord,
    horizon: u32,
) -> Result<WakeTransit> {
    if record.config_digest != spec.digest() {
        return Err(Error::Precondition("record was produced from a different spec".into()));
    }
    let t_y = record
        .first_passage(&y)
        .ok_or_else(|| Error::Precondition(format!("site {y} is not visited in the record")))?;
    // replay up to T(0,y) to recover who is standing on y
    let mut sim = Simulation::new(spec, record.source, t_y, Mode::Identity, &RunOptions::default())?;
    sim.run_until_visited(&[y])?;
    let mut here: Vec<_> = sim.walkers().iter().filter(|w| w.pos == y).copied().collect();
    if here.is_empty() {
        return Err(Error::InvariantViolation(format!(
            "no particle at {y} at its first passage time {t_y}"
        )));
    }
    here.sort_by_key(|w| (w.origin, w.index));
    let [a, b] = y.key_words();
    let pick = bounded(keyed_word(spec.master_seed, tag::WAKE_TRANSIT, &[a, b]), here.len() as u64);
    let w = here[pick as usize];
    let particle = (w.origin, w.index);
    if spec.eta_at(&y) >= 1 {
        return Ok(WakeTransit {
            u: CensoredTime::Finite(0),
            landing: Some(y),
            particle,
        });
    }
    let key = spec.stream_key(&w.origin, w.index);
    let mut pos = y;
    let mut steps = w.steps as u64;
    let mut u = 0u32;
    while t_y + u < horizon {
        steps += 1;
        u += 1;
        pos = stream_step(key, steps, spec.dimension).apply(pos);
        if spec.eta_at(&pos) >= 1 {
            return Ok(WakeTransit {
                u: CensoredTime::Finite(u),
                landing: Some(pos),
                particle,
            });
        }
    }
    Ok(WakeTransit {
        u: CensoredTime::Censored { horizon },
        landing: None,
        particle,
    })
}

/// First `(time, site)` at which `small` has visited a site `big` had not,
/// i.e. a failure of `xi_n(small) ⊆ xi_n(big)`. Only times up to the shorter
/// horizon are compared.
pub fn containment_failure(small: &PassageRecord, big: &PassageRecord) -> Option<(u32, SiteCoord)> {
    let limit = small.horizon.min(big.horizon);
    small
        .sites
        .iter()
        .take_while(|v| v.time <= limit)
        .find(|v| big.first_passage(&v.site).is_none_or(|t| t > v.time))
        .map(|v| (v.time, v.site))
}
