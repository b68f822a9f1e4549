//! Keyed counter-based randomness.
//!
//! Nothing here carries mutable generator state: the particle count at a site
//! and every step of every particle's walk are computed on demand from
//! `hash(master_seed, domain_tag, key...)`. Any particle's `n`-th step can be
//! read in O(1), which is what lets processes started from different sites be
//! run on literally the same trajectories.

use rand::RngCore;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::{check_dimension, SiteCoord};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Domain tags keep the different kinds of draws from ever sharing a key.
pub mod tag {
    pub const ETA: u64 = 0x6574_615f_6472_6177;
    pub const STEP: u64 = 0x7374_6570_5f73_7472;
    pub const AGGREGATE: u64 = 0x6167_6772_5f73_7465;
    pub const REPLICA: u64 = 0x7265_706c_6963_6173;
    pub const WAKE_TRANSIT: u64 = 0x7761_6b65_5f74_726e;
    pub const SAMPLING: u64 = 0x7361_6d70_6c69_6e67;
}

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Keyed pseudorandom function over a short word sequence.
#[inline]
pub fn keyed_word(seed: u64, domain: u64, words: &[u64]) -> u64 {
    let mut h = mix64(seed ^ mix64(domain.wrapping_add(GOLDEN)));
    for &w in words {
        h = mix64(h.wrapping_add(GOLDEN) ^ w);
    }
    h
}

#[inline]
fn site_word(seed: u64, domain: u64, x: &SiteCoord, extra: u64) -> u64 {
    let [a, b] = x.key_words();
    keyed_word(seed, domain, &[a, b, extra])
}

/// Uniform in `(0, 1]` from the top 53 bits.
#[inline]
pub fn unit_open_closed(word: u64) -> f64 {
    ((word >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform index in `0..n` by multiply-shift.
#[inline]
pub fn bounded(word: u64, n: u64) -> u64 {
    ((word as u128 * n as u128) >> 64) as u64
}

/// Seed for replica `r` of an experiment with the given master seed.
pub fn derive_seed(master: u64, replica: u64) -> u64 {
    keyed_word(master, tag::REPLICA, &[replica])
}

/// A SplitMix64 stream started at a keyed offset; implements [`RngCore`] so
/// standard samplers (binomial, Poisson) can consume keyed randomness.
#[derive(Clone, Debug)]
pub struct KeyedStream {
    key: u64,
    counter: u64,
}

impl KeyedStream {
    pub fn new(key: u64) -> Self {
        KeyedStream { key, counter: 0 }
    }
}

impl RngCore for KeyedStream {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let w = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&w[..chunk.len()]);
        }
    }
}

/// Distribution of the i.i.d. particle counts `eta(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    Constant { c: u64 },
    Bernoulli { p: f64 },
    /// Failures before the first success: `P[eta >= k] = (1-p)^k`.
    Geometric { p: f64 },
    Poisson { lambda: f64 },
    /// `P[eta >= n] >= (ln n)^-tail_delta`, saturated at `cap`.
    HeavyTail {
        tail_delta: f64,
        #[serde(default = "default_cap")]
        cap: u64,
    },
}

pub const DEFAULT_HEAVY_TAIL_CAP: u64 = 1 << 32;

fn default_cap() -> u64 {
    DEFAULT_HEAVY_TAIL_CAP
}

impl Family {
    /// `P[eta >= 1]`.
    pub fn p1(&self) -> f64 {
        match *self {
            Family::Constant { c } => {
                if c >= 1 {
                    1.0
                } else {
                    0.0
                }
            }
            Family::Bernoulli { p } => p,
            Family::Geometric { p } => 1.0 - p,
            Family::Poisson { lambda } => -(-lambda).exp_m1(),
            // ceil(exp(u^{-1/delta})) >= ceil(e) = 3 for every u in (0, 1]
            Family::HeavyTail { .. } => 1.0,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::invalid(format!("spec.family.{field}"), msg));
        match *self {
            Family::Constant { .. } => Ok(()),
            Family::Bernoulli { p } | Family::Geometric { p } => {
                if p > 0.0 && p <= 1.0 {
                    Ok(())
                } else {
                    bad("p", format!("need 0 < p <= 1, got {p}"))
                }
            }
            Family::Poisson { lambda } => {
                if lambda > 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    bad("lambda", format!("need lambda > 0, got {lambda}"))
                }
            }
            Family::HeavyTail { tail_delta: delta, cap } => {
                if !(delta > 0.0 && delta < dim as f64) {
                    bad("tail_delta", format!("need 0 < tail_delta < d = {dim}, got {delta}"))
                } else if cap < 1 {
                    bad("cap", "need cap >= 1".into())
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Inverse-transform draw from a single uniform word.
    fn sample(&self, word: u64) -> u64 {
        let u = unit_open_closed(word);
        match *self {
            Family::Constant { c } => c,
            Family::Bernoulli { p } => u64::from(u <= p),
            Family::Geometric { p } => {
                if p >= 1.0 {
                    0
                } else {
                    let k = (u.ln() / (-p).ln_1p()).floor();
                    if k >= u64::MAX as f64 {
                        u64::MAX
                    } else {
                        k as u64
                    }
                }
            }
            Family::Poisson { lambda } => {
                if lambda <= 30.0 {
                    poisson_inversion(u, lambda)
                } else {
                    let dist = Poisson::new(lambda).expect("validated lambda");
                    dist.sample(&mut KeyedStream::new(word)) as u64
                }
            }
            Family::HeavyTail { tail_delta: delta, cap } => heavy_tail_sample(u, delta, cap),
        }
    }
}

fn poisson_inversion(u: f64, lambda: f64) -> u64 {
    let mut k = 0u64;
    let mut pmf = (-lambda).exp();
    let mut cdf = pmf;
    while u > cdf && pmf > 0.0 {
        k += 1;
        pmf *= lambda / k as f64;
        cdf += pmf;
    }
    k
}

#[inline]
fn heavy_tail_sample(u: f64, delta: f64, cap: u64) -> u64 {
    let v = u.powf(-1.0 / delta).exp();
    if !v.is_finite() || v >= cap as f64 {
        cap
    } else {
        (v.ceil() as u64).min(cap)
    }
}

/// `min(cap, ceil(exp(u^{-1/delta})))`, the inverse-transform sampler for the
/// heavy-tailed family. With `u` uniform, `P[eta >= n] = (ln(n-1))^-delta`
/// for `3 <= n <= cap`, which is at least `(ln n)^-delta`.
pub fn heavy_tail_quantile(u: f64, delta: f64, cap: u64) -> Result<u64> {
    if !(u > 0.0 && u <= 1.0) {
        return Err(Error::invalid("u", format!("need 0 < u <= 1, got {u}")));
    }
    if !(delta > 0.0) {
        return Err(Error::invalid("delta", format!("need delta > 0, got {delta}")));
    }
    if cap < 1 {
        return Err(Error::invalid("cap", "need cap >= 1"));
    }
    Ok(heavy_tail_sample(u, delta, cap))
}

/// A fixed particle count at one site.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteCount {
    pub site: SiteCoord,
    pub count: u64,
}

/// Everything needed to reproduce an initial configuration and all walks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfigSpec {
    pub dimension: usize,
    pub family: Family,
    pub master_seed: u64,
    #[serde(default)]
    pub condition_origin: bool,
    /// When present, `eta` is exactly this finite map (unlisted sites empty)
    /// and `family` only supplies `p1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overrides: Option<Vec<SiteCount>>,
    /// Particles added on top of the sampled counts. Added particles get the
    /// next particle indices at their site, so the original particles keep
    /// their trajectories.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub extra: Vec<SiteCount>,
}

/// Identifies one step of one particle's walk.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TrajectoryKey {
    pub origin_site: SiteCoord,
    /// 1-based index among the particles initially at `origin_site`.
    pub particle_index: u64,
    /// 1-based step number counted from the particle's wake-up.
    pub step_index: u64,
}

/// One of the `2d` unit steps: `axis` and `sign`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct UnitStep {
    pub axis: u8,
    pub positive: bool,
}

impl UnitStep {
    #[inline]
    pub fn from_index(i: u64) -> Self {
        UnitStep {
            axis: (i / 2) as u8,
            positive: i % 2 == 0,
        }
    }

    #[inline]
    pub fn apply(&self, x: SiteCoord) -> SiteCoord {
        x.step(self.axis as usize, if self.positive { 1 } else { -1 })
    }

    pub fn as_site(&self, d: usize) -> SiteCoord {
        self.apply(SiteCoord::origin(d))
    }
}

impl InitialConfigSpec {
    pub fn new(dimension: usize, family: Family, master_seed: u64) -> Self {
        InitialConfigSpec {
            dimension,
            family,
            master_seed,
            condition_origin: false,
            overrides: None,
            extra: Vec::new(),
        }
    }

    pub fn conditioned(mut self) -> Self {
        self.condition_origin = true;
        self
    }

    pub fn with_seed(&self, master_seed: u64) -> Self {
        InitialConfigSpec {
            master_seed,
            ..self.clone()
        }
    }

    /// Finite configuration: exactly these counts, all other sites empty.
    pub fn with_overrides(mut self, sites: impl IntoIterator<Item = (SiteCoord, u64)>) -> Self {
        self.overrides = Some(
            sites
                .into_iter()
                .map(|(site, count)| SiteCount { site, count })
                .collect(),
        );
        self
    }

    pub fn with_extra(mut self, site: SiteCoord, count: u64) -> Self {
        self.extra.push(SiteCount { site, count });
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_dimension(self.dimension).map_err(|_| {
            Error::invalid(
                "spec.dimension",
                format!("dimension must be in 1..=4, got {}", self.dimension),
            )
        })?;
        self.family.validate(self.dimension)?;
        if self.condition_origin && self.overrides.is_none() && self.family.p1() <= 0.0 {
            return Err(Error::invalid(
                "spec.condition_origin",
                "cannot condition on eta(0) >= 1 when P[eta >= 1] = 0",
            ));
        }
        let check_sites = |name: &str, list: &[SiteCount]| -> Result<()> {
            for (i, sc) in list.iter().enumerate() {
                if sc.site.dim() != self.dimension {
                    return Err(Error::invalid(
                        format!("spec.{name}[{i}].site"),
                        format!("site {} has dimension {}, expected {}", sc.site, sc.site.dim(), self.dimension),
                    ));
                }
            }
            Ok(())
        };
        if let Some(o) = &self.overrides {
            check_sites("overrides", o)?;
        }
        check_sites("extra", &self.extra)?;
        Ok(())
    }

    pub fn p1(&self) -> f64 {
        self.family.p1()
    }

    /// Particle count of the sampled (or overridden) configuration, before
    /// `extra` particles are added.
    pub fn base_eta_at(&self, x: &SiteCoord) -> u64 {
        if let Some(o) = &self.overrides {
            return o.iter().filter(|sc| sc.site == *x).map(|sc| sc.count).sum();
        }
        let first = self.family.sample(site_word(self.master_seed, tag::ETA, x, 0));
        if first >= 1 || !self.condition_origin || !x.is_origin() {
            return first;
        }
        // eta is a product field, so conditioning on eta(0) >= 1 only
        // affects the origin: redraw there until it is occupied
        let mut attempt = 1u64;
        loop {
            let v = self.family.sample(site_word(self.master_seed, tag::ETA, x, attempt));
            if v >= 1 {
                return v;
            }
            attempt += 1;
        }
    }

    /// `eta(x)`, including any extra particles.
    #[inline]
    pub fn eta_at(&self, x: &SiteCoord) -> u64 {
        let base = self.base_eta_at(x);
        if self.extra.is_empty() {
            base
        } else {
            base + self
                .extra
                .iter()
                .filter(|sc| sc.site == *x)
                .map(|sc| sc.count)
                .sum::<u64>()
        }
    }

    /// Key of the step stream of particle `k` born at `origin`. Stream step
    /// `n` is `stream_step(key, n, d)`.
    #[inline]
    pub fn stream_key(&self, origin: &SiteCoord, particle_index: u64) -> u64 {
        site_word(self.master_seed, tag::STEP, origin, particle_index)
    }

    pub fn step_at(&self, key: &TrajectoryKey) -> UnitStep {
        let stream = self.stream_key(&key.origin_site, key.particle_index);
        stream_step(stream, key.step_index, self.dimension)
    }

    /// Position after `steps` moves of particle `k` started at `origin`.
    pub fn walk_position(&self, origin: &SiteCoord, particle_index: u64, steps: u64) -> SiteCoord {
        let key = self.stream_key(origin, particle_index);
        (1..=steps).fold(*origin, |x, n| stream_step(key, n, self.dimension).apply(x))
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        let hash = Sha256::digest(&json);
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Step `n` (1-based) of the stream with the given key.
#[inline]
pub fn stream_step(key: u64, n: u64, dim: usize) -> UnitStep {
    let w = mix64(key.wrapping_add(n.wrapping_mul(GOLDEN)));
    UnitStep::from_index(bounded(w, 2 * dim as u64))
}

/// Splits `count` particles at one position uniformly over the `2d` unit
/// steps. The draw is keyed by `(seed, position, time)` so it does not
/// depend on iteration order.
pub fn multinomial_split(seed: u64, position: &SiteCoord, time: u32, count: u64, dim: usize, out: &mut [u64]) {
    let dirs = 2 * dim;
    debug_assert!(out.len() >= dirs);
    out[..dirs].iter_mut().for_each(|v| *v = 0);
    let key = site_word(seed, tag::AGGREGATE, position, time as u64);
    let mut stream = KeyedStream::new(key);
    if count <= 16 {
        for _ in 0..count {
            out[bounded(stream.next_u64(), dirs as u64) as usize] += 1;
        }
        return;
    }
    let mut remaining = count;
    for (i, slot) in out[..dirs - 1].iter_mut().enumerate() {
        if remaining == 0 {
            break;
        }
        let p = 1.0 / (dirs - i) as f64;
        let k = Binomial::new(remaining, p).expect("valid binomial").sample(&mut stream);
        *slot = k;
        remaining -= k;
    }
    out[dirs - 1] += remaining;
}
