//! Reproducible, manifest-driven studies.
//!
//! A manifest is a flat JSON object: `kind`, `spec`, and whichever of the
//! optional parameters that kind needs. [`execute`] validates it, runs the
//! study (replicas in parallel, assembled in replica order) and writes a
//! `report.json` with the manifest embedded plus CSV tables and, in 2-D,
//! SVG pictures. Outputs depend only on the manifest, never on the number of
//! worker threads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{self, verify_record, Mode, PassageRecord, RunOptions, Simulation};
use crate::error::{Error, Result};
use crate::io::{atomic_write, write_json};
use crate::lattice::{diamond_size, SiteCoord};
use crate::oracle::{self, FiniteConfig, DEFAULT_LEAF_BUDGET};
use crate::passage::{self, containment_failure, judge, CensoredTime, Verdict};
use crate::randomness::{bounded, derive_seed, keyed_word, tag, Family, InitialConfigSpec};
use crate::shape::{self, default_directions, metrics, rescale, shape_from_mu, MuEstimate, MuOptions, ShapeMetrics};
use crate::stats::Proportion;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "FROG_OUTPUT_ROOT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Run,
    Mu,
    Shape,
    FullDiamond,
    MGood,
    GrowthProbe,
    TailCurve,
    Oracle,
    Check,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Run => "run",
            ExperimentKind::Mu => "mu",
            ExperimentKind::Shape => "shape",
            ExperimentKind::FullDiamond => "full_diamond",
            ExperimentKind::MGood => "m_good",
            ExperimentKind::GrowthProbe => "growth_probe",
            ExperimentKind::TailCurve => "tail_curve",
            ExperimentKind::Oracle => "oracle",
            ExperimentKind::Check => "check",
        }
    }
}

/// Everything a study needs. Fields a kind does not use must be absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub spec: InitialConfigSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_schedule: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<Vec<SiteCoord>>,
    /// `run`, `oracle`, `check`: starting site (default origin).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SiteCoord>,
    /// `mu`: also estimate along the occupied-ray subsequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ray: Option<bool>,
    /// `full_diamond`: comparison spec (default bernoulli with matched p1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<InitialConfigSpec>,
    /// `m_good`: values of m to test.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_values: Option<Vec<u64>>,
    /// `m_good`: the dimension constant (default 1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_d: Option<f64>,
    /// `growth_probe`: probe sites.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<SiteCoord>>,
    /// `growth_probe`: candidate growth constants (default 0.05, ..., 0.95).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth_delta_grid: Option<Vec<f64>>,
    /// `growth_probe`: required event frequency (default 0.99).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    /// `tail_curve`: target site.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<SiteCoord>,
    /// `tail_curve`: survival thresholds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_grid: Option<Vec<u32>>,
    /// `oracle`: leaf budget (default 10^7).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    /// `check`: number of random triples / coupled pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triples: Option<usize>,
    /// `check`: sampling window (L1 radius) for triples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<u32>,
    /// `check`: an existing record CSV to audit instead of fresh runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record: Option<PathBuf>,
}

impl ExperimentManifest {
    pub fn new(kind: ExperimentKind, spec: InitialConfigSpec) -> Self {
        ExperimentManifest {
            kind,
            name: None,
            spec,
            output_dir: None,
            mode: None,
            horizon: None,
            replicas: None,
            n_schedule: None,
            directions: None,
            source: None,
            ray: None,
            baseline: None,
            m_values: None,
            h_d: None,
            probes: None,
            growth_delta_grid: None,
            threshold: None,
            x0: None,
            m_grid: None,
            budget: None,
            triples: None,
            window: None,
            record: None,
        }
    }

    /// Parses a manifest; type errors carry the JSON path of the field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: match e.path().to_string() {
                p if p == "." => "manifest".into(),
                p => format!("manifest.{p}"),
            },
            message: e.into_inner().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// The manifest as recorded in outputs: where they were written is not
    /// part of the result.
    fn portable(&self) -> Self {
        ExperimentManifest {
            output_dir: None,
            ..self.clone()
        }
    }

    fn field_names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        macro_rules! present {
            ($($f:ident),*) => {$(
                if self.$f.is_some() {
                    out.push(stringify!($f));
                }
            )*};
        }
        present!(
            mode, horizon, replicas, n_schedule, directions, source, ray, baseline, m_values, h_d, probes,
            growth_delta_grid, threshold, x0, m_grid, budget, triples, window, record
        );
        out
    }

    fn allowed(&self) -> &'static [&'static str] {
        match self.kind {
            ExperimentKind::Run => &["mode", "horizon", "source"],
            ExperimentKind::Mu => &["mode", "horizon", "replicas", "n_schedule", "directions", "ray"],
            ExperimentKind::Shape => &["mode", "horizon", "replicas", "n_schedule", "directions"],
            ExperimentKind::FullDiamond => &["mode", "replicas", "n_schedule", "baseline"],
            ExperimentKind::MGood => &["m_values", "h_d"],
            ExperimentKind::GrowthProbe => &["horizon", "replicas", "n_schedule", "probes", "growth_delta_grid", "threshold"],
            ExperimentKind::TailCurve => &["replicas", "x0", "m_grid"],
            ExperimentKind::Oracle => &["horizon", "source", "budget"],
            ExperimentKind::Check => &["mode", "horizon", "replicas", "source", "triples", "window", "record"],
        }
    }

    fn required(&self) -> &'static [&'static str] {
        match self.kind {
            ExperimentKind::Run => &["horizon"],
            ExperimentKind::Mu => &["horizon", "replicas", "n_schedule"],
            ExperimentKind::Shape => &["horizon", "replicas", "n_schedule"],
            ExperimentKind::FullDiamond => &["replicas", "n_schedule"],
            ExperimentKind::MGood => &["m_values"],
            ExperimentKind::GrowthProbe => &["horizon", "replicas", "n_schedule", "probes"],
            ExperimentKind::TailCurve => &["replicas", "x0", "m_grid"],
            ExperimentKind::Oracle => &["horizon"],
            ExperimentKind::Check => &["horizon"],
        }
    }

    /// Checks that exactly the fields of the named kind are present and valid.
    pub fn validate(&self) -> Result<()> {
        let kind = self.kind.name();
        let present = self.field_names();
        for f in &present {
            if !self.allowed().contains(f) {
                return Err(Error::Schema {
                    path: format!("manifest.{f}"),
                    message: format!("not used by kind `{kind}`"),
                });
            }
        }
        for f in self.required() {
            if !present.contains(f) {
                return Err(Error::Schema {
                    path: format!("manifest.{f}"),
                    message: format!("required for kind `{kind}`"),
                });
            }
        }
        self.spec.validate()?;
        let d = self.spec.dimension;
        let dim_ok = |field: &str, x: &SiteCoord| -> Result<()> {
            if x.dim() != d {
                Err(Error::invalid(format!("manifest.{field}"), format!("{x} is not in dimension {d}")))
            } else {
                Ok(())
            }
        };
        if let Some(h) = self.horizon {
            if h > engine::MAX_HORIZON {
                return Err(Error::invalid("manifest.horizon", "horizon must be below 2^30"));
            }
        }
        if self.replicas == Some(0) {
            return Err(Error::invalid("manifest.replicas", "need at least one replica"));
        }
        if let Some(ns) = &self.n_schedule {
            let min = if self.kind == ExperimentKind::FullDiamond { 0 } else { 1 };
            if ns.is_empty() || ns[0] < min || ns.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid("manifest.n_schedule", "must be nonempty, positive and strictly increasing"));
            }
            if let Some(h) = self.horizon {
                if self.kind == ExperimentKind::Shape && *ns.last().unwrap() > h {
                    return Err(Error::invalid("manifest.n_schedule", "largest n exceeds the horizon"));
                }
            }
        }
        for (i, x) in self.directions.iter().flatten().enumerate() {
            dim_ok(&format!("directions[{i}]"), x)?;
            if x.is_origin() {
                return Err(Error::invalid(format!("manifest.directions[{i}]"), "direction must be nonzero"));
            }
        }
        if let Some(x) = &self.source {
            dim_ok("source", x)?;
        }
        for (i, x) in self.probes.iter().flatten().enumerate() {
            dim_ok(&format!("probes[{i}]"), x)?;
        }
        if let Some(x) = &self.x0 {
            dim_ok("x0", x)?;
        }
        if let Some(b) = &self.baseline {
            b.validate().map_err(|e| prefix_field(e, "baseline"))?;
            if b.dimension != d {
                return Err(Error::invalid("manifest.baseline.dimension", "must match spec.dimension"));
            }
        }
        if let Some(h) = self.h_d {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::invalid("manifest.h_d", "must be a positive number"));
            }
        }
        if let Some(grid) = &self.growth_delta_grid {
            if grid.is_empty() || grid.iter().any(|g| !(*g > 0.0 && *g < 1.0)) {
                return Err(Error::invalid("manifest.growth_delta_grid", "entries must lie in (0, 1)"));
            }
        }
        if let Some(t) = self.threshold {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::invalid("manifest.threshold", "must lie in (0, 1]"));
            }
        }
        if let Some(g) = &self.m_grid {
            if g.is_empty() || g.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid("manifest.m_grid", "must be nonempty and strictly increasing"));
            }
        }
        match self.kind {
            ExperimentKind::FullDiamond => {
                if !matches!(self.spec.family, Family::HeavyTail { .. }) {
                    return Err(Error::invalid("manifest.spec.family", "full_diamond needs a heavy_tail family"));
                }
            }
            ExperimentKind::GrowthProbe | ExperimentKind::TailCurve => {
                if !self.spec.condition_origin {
                    return Err(Error::invalid(
                        "manifest.spec.condition_origin",
                        format!("kind `{kind}` needs an origin-conditioned spec"),
                    ));
                }
            }
            ExperimentKind::Oracle => {
                if self.spec.overrides.is_none() {
                    return Err(Error::invalid("manifest.spec.overrides", "the oracle needs a finite configuration"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn mode(&self) -> Mode {
        self.mode.unwrap_or_default()
    }

    /// Output directory: the manifest's, else `$FROG_OUTPUT_ROOT/<name>`,
    /// else `frog-output/<name>`.
    pub fn resolve_output_dir(&self) -> PathBuf {
        if let Some(dir) = &self.output_dir {
            return dir.clone();
        }
        let root = std::env::var_os(OUTPUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("frog-output"));
        root.join(self.name.clone().unwrap_or_else(|| self.kind.name().to_string()))
    }
}

fn prefix_field(e: Error, prefix: &str) -> Error {
    match e {
        Error::InvalidInput { field, message } => Error::InvalidInput {
            field: format!("manifest.{prefix}.{}", field.trim_start_matches("spec.")),
            message,
        },
        other => other,
    }
}

/// What a study wrote and a one-line summary per metric.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub output_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: PathBuf) -> Self {
        Writer { dir, files: Vec::new() }
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        atomic_write(&path, body.as_bytes())?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.dir.join(name);
        write_json(&path, value)?;
        self.files.push(path);
        Ok(())
    }

    fn report<T: Serialize>(&mut self, manifest: &ExperimentManifest, results: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Report<'a, T> {
            manifest: ExperimentManifest,
            config_digest: String,
            results: &'a T,
        }
        self.json(
            "report.json",
            &Report {
                manifest: manifest.portable(),
                config_digest: manifest.spec.digest(),
                results,
            },
        )
    }
}

fn replica_spec(spec: &InitialConfigSpec, r: usize) -> InitialConfigSpec {
    spec.with_seed(derive_seed(spec.master_seed, r as u64))
}

fn coords_csv(x: &SiteCoord) -> String {
    x.coords().iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
}

fn coord_header(prefix: &str, d: usize) -> String {
    (1..=d).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(",")
}

/// Validates and runs a manifest, writing its outputs.
pub fn execute(manifest: &ExperimentManifest) -> Result<Outcome> {
    manifest.validate()?;
    let dir = manifest.resolve_output_dir();
    let mut w = Writer::new(dir.clone());
    w.text("manifest.json", &(manifest.portable().to_json() + "\n"))?;
    let summary = match manifest.kind {
        ExperimentKind::Run => run_study(manifest, &mut w)?,
        ExperimentKind::Mu => mu_study(manifest, &mut w)?,
        ExperimentKind::Shape => {
            let report = shape_experiment(manifest)?;
            report.write(manifest, &mut w)?
        }
        ExperimentKind::FullDiamond => {
            let report = full_diamond_experiment(manifest)?;
            report.write(manifest, &mut w)?
        }
        ExperimentKind::MGood => m_good_study(manifest, &mut w)?,
        ExperimentKind::GrowthProbe => growth_study(manifest, &mut w)?,
        ExperimentKind::TailCurve => tail_study(manifest, &mut w)?,
        ExperimentKind::Oracle => oracle_study(manifest, &mut w)?,
        ExperimentKind::Check => check_study(manifest, &mut w)?,
    };
    Ok(Outcome {
        output_dir: dir,
        files: w.files,
        summary,
    })
}

// ---------------------------------------------------------------- run

#[derive(Serialize)]
struct RunSummary {
    source: SiteCoord,
    horizon: u32,
    mode: Mode,
    visited: usize,
    active: u64,
    coverage: f64,
    frontier_sizes: Vec<u64>,
    heavy_tail_cap: Option<u64>,
}

fn heavy_tail_cap(spec: &InitialConfigSpec) -> Option<u64> {
    match spec.family {
        Family::HeavyTail { cap, .. } => Some(cap),
        _ => None,
    }
}

fn run_study(m: &ExperimentManifest, w: &mut Writer) -> Result<Vec<String>> {
    let d = m.spec.dimension;
    let source = m.source.unwrap_or(SiteCoord::origin(d));
    let horizon = m.horizon.unwrap();
    let options = RunOptions {
        snapshot_dir: Some(w.dir.clone()),
        ..RunOptions::default()
    };
    let record = engine::run_with(&m.spec, source, horizon, m.mode(), &options)?;
    verify_record(&m.spec, &record)?;
    let path = w.dir.join("record.csv");
    record.write_csv(&path)?;
    w.files.push(path);
    let coverage = record.sites.len() as f64 / diamond_size(d, horizon as u64)? as f64;
    if d == 2 && horizon > 0 && !record.is_empty() {
        let set = rescale(&record, horizon)?;
        w.text("visited.svg", &set.to_svg(&format!("visited set at n = {horizon}")).unwrap())?;
    }
    let summary = RunSummary {
        source,
        horizon,
        mode: m.mode(),
        visited: record.sites.len(),
        active: *record.active_counts.last().unwrap(),
        coverage,
        frontier_sizes: record.frontier_sizes.clone(),
        heavy_tail_cap: heavy_tail_cap(&m.spec),
    };
    w.report(m, &summary)?;
    Ok(vec![
        format!("visited sites: {}", summary.visited),
        format!("active particles: {}", summary.active),
        format!("diamond coverage: {coverage:.6}"),
    ])
}

// ---------------------------------------------------------------- mu

fn mu_csv(estimates: &[MuEstimate], d: usize) -> String {
    let mut out = format!("{},n,replica,t_over_n\n", coord_header("u", d));
    for e in estimates {
        for at in &e.per_n {
            for (r, s) in at.samples.iter().enumerate() {
                let v = s.map(|v| v.to_string()).unwrap_or_else(|| "censored".into());
                let _ = writeln!(out, "{},{},{r},{v}", coords_csv(&e.direction), at.n);
            }
        }
    }
    out
}

fn mu_lines(estimates: &[MuEstimate]) -> Vec<String> {
    estimates
        .iter()
        .map(|e| {
            format!(
                "mu{}: {:.5} [{:.5}, {:.5}] censored {}{}",
                e.direction,
                e.point,
                e.ci_low,
                e.ci_high,
                e.censored_at_max,
                if e.unreliable { " (unreliable)" } else { "" }
            )
        })
        .collect()
}

fn mu_study(m: &ExperimentManifest, w: &mut Writer) -> Result<Vec<String>> {
    let d = m.spec.dimension;
    let directions = m.directions.clone().unwrap_or_else(|| default_directions(d));
    let opts = MuOptions {
        mode: m.mode(),
        ray: m.ray.unwrap_or(false),
    };
    let estimates = shape::estimate_mu_many(
        &m.spec,
        &directions,
        m.n_schedule.as_ref().unwrap(),
        m.replicas.unwrap(),
        m.horizon.unwrap(),
        &opts,
    )?;
    w.text("mu_samples.csv", &mu_csv(&estimates, d))?;
    w.report(m, &estimates)?;
    Ok(mu_lines(&estimates))
}

// ---------------------------------------------------------------- shape

/// Replica-averaged metrics at one scale.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaleSummary {
    pub n: u32,
    pub coverage: f64,
    pub symmetry_defect: f64,
    pub convexity_defect: Option<f64>,
    /// Hausdorff distance to the rescaled set at the previous scale.
    pub hausdorff_to_previous: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShapeReport {
    pub per_n: Vec<ScaleSummary>,
    /// `per_replica[r][j]`: metrics of replica `r` at the `j`-th scale.
    pub per_replica: Vec<Vec<ShapeMetrics>>,
    pub mu: Vec<MuEstimate>,
    /// Directions whose estimate failed (e.g. every sample censored).
    pub mu_failures: BTreeMap<String, String>,
    pub shape: Option<shape::ShapeEstimate>,
    pub shape_error: Option<String>,
    pub censored_per_direction: BTreeMap<String, usize>,
    #[serde(skip)]
    pub snapshots: Vec<shape::RescaledSet>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn shape_experiment(m: &ExperimentManifest) -> Result<ShapeReport> {
    m.validate()?;
    let d = m.spec.dimension;
    let schedule = m.n_schedule.clone().unwrap();
    let horizon = m.horizon.unwrap();
    let replicas = m.replicas.unwrap();
    let directions = m.directions.clone().unwrap_or_else(|| default_directions(d));
    let per: Vec<(PassageRecord, Vec<ShapeMetrics>)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let spec = replica_spec(&m.spec, r);
            let record = engine::run(&spec, SiteCoord::origin(d), horizon, m.mode())?;
            verify_record(&spec, &record)?;
            let mut out = Vec::new();
            let mut prev: Option<shape::RescaledSet> = None;
            for &n in &schedule {
                let set = rescale(&record, n)?;
                if set.is_empty() {
                    return Err(Error::EstimationFailed(format!("replica {r} has an empty visited set")));
                }
                out.push(metrics(&set, prev.as_ref())?);
                prev = Some(set);
            }
            Ok((record, out))
        })
        .collect::<Result<_>>()?;
    let per_n = schedule
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let col = || per.iter().map(move |(_, v)| &v[j]);
            ScaleSummary {
                n,
                coverage: mean(col().map(|x| x.coverage)),
                symmetry_defect: mean(col().map(|x| x.symmetry_defect)),
                convexity_defect: col().next().unwrap().convexity_defect.map(|_| {
                    mean(col().filter_map(|x| x.convexity_defect))
                }),
                hausdorff_to_previous: (j > 0).then(|| mean(col().filter_map(|x| x.hausdorff_to_reference))),
            }
        })
        .collect();
    let records: Vec<PassageRecord> = per.iter().map(|(r, _)| r.clone()).collect();
    // along x, sample at scales n / |x|_1 so targets sit near the boundary
    // of the radius-n diamond; a direction with nothing observed is reported
    // rather than aborting the study
    let mut mu = Vec::new();
    let mut mu_failures = BTreeMap::new();
    for &x in &directions {
        let norm = x.l1_norm() as u32;
        let mut sched: Vec<u32> = schedule.iter().map(|n| n / norm).filter(|&k| k > 0).collect();
        sched.dedup();
        match shape::mu_from_records(&m.spec, &records, x, &sched) {
            Ok(e) => mu.push(e),
            Err(Error::EstimationFailed(msg) | Error::InvalidInput { message: msg, .. }) => {
                mu_failures.insert(x.to_string(), msg);
            }
            Err(e) => return Err(e),
        }
    }
    let censored_per_direction = mu
        .iter()
        .map(|e| (e.direction.to_string(), e.censored_at_max))
        .collect();
    let (shape, shape_error) = match shape_from_mu(&mu) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let snapshots = schedule
        .iter()
        .map(|&n| rescale(&records[0], n))
        .collect::<Result<_>>()?;
    Ok(ShapeReport {
        per_n,
        per_replica: per.into_iter().map(|(_, v)| v).collect(),
        mu,
        mu_failures,
        shape,
        shape_error,
        censored_per_direction,
        snapshots,
    })
}

impl ShapeReport {
    fn write(&self, m: &ExperimentManifest, w: &mut Writer) -> Result<Vec<String>> {
        let mut csv = String::from("n,replica,coverage,symmetry_defect,convexity_defect,hausdorff_to_previous\n");
        for (r, row) in self.per_replica.iter().enumerate() {
            for x in row {
                let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
                let _ = writeln!(
                    csv,
                    "{},{r},{},{},{},{}",
                    x.scale,
                    x.coverage,
                    x.symmetry_defect,
                    opt(x.convexity_defect),
                    opt(x.hausdorff_to_reference)
                );
            }
        }
        w.text("metrics.csv", &csv)?;
        w.text("mu_samples.csv", &mu_csv(&self.mu, m.spec.dimension))?;
        for set in &self.snapshots {
            if let Some(svg) = set.to_svg(&format!("replica 0, n = {}", set.scale)) {
                w.text(&format!("visited_n{}.svg", set.scale), &svg)?;
            }
        }
        if let Some(svg) = self.shape.as_ref().and_then(|s| s.to_svg("estimated limit shape")) {
            w.text("shape.svg", &svg)?;
        }
        w.report(m, self)?;
        let mut lines: Vec<String> = self
            .per_n
            .iter()
            .map(|s| {
                format!(
                    "n={}: coverage {:.5}, symmetry defect {:.5}, convexity defect {}, hausdorff to previous {}",
                    s.n,
                    s.coverage,
                    s.symmetry_defect,
                    s.convexity_defect.map(|v| format!("{v:.5}")).unwrap_or_else(|| "n/a".into()),
                    s.hausdorff_to_previous.map(|v| format!("{v:.5}")).unwrap_or_else(|| "n/a".into())
                )
            })
            .collect();
        lines.extend(mu_lines(&self.mu));
        lines.extend(self.mu_failures.iter().map(|(x, why)| format!("mu{x}: not estimated ({why})")));
        Ok(lines)
    }
}

// ---------------------------------------------------------------- full diamond

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiamondScale {
    pub n: u32,
    pub heavy_mean: f64,
    pub baseline_mean: f64,
    /// Fraction of seed-paired replicas where the heavy-tailed coverage is
    /// strictly larger.
    pub heavy_wins: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FullDiamondReport {
    pub baseline: InitialConfigSpec,
    pub tail_delta: f64,
    pub heavy_tail_cap: u64,
    pub per_n: Vec<DiamondScale>,
    /// `heavy[r][j]`, `baseline[r][j]`: coverage of `D_n` at the `j`-th n.
    pub heavy: Vec<Vec<f64>>,
    pub baseline_coverage: Vec<Vec<f64>>,
}

/// Bernoulli spec with the same occupation probability as `spec`.
pub fn matched_baseline(spec: &InitialConfigSpec) -> InitialConfigSpec {
    InitialConfigSpec {
        family: Family::Bernoulli { p: spec.p1() },
        overrides: None,
        extra: Vec::new(),
        ..spec.clone()
    }
}

fn coverages(spec: &InitialConfigSpec, schedule: &[u32], mode: Mode) -> Result<Vec<f64>> {
    let d = spec.dimension;
    let record = engine::run(spec, SiteCoord::origin(d), *schedule.last().unwrap(), mode)?;
    verify_record(spec, &record)?;
    schedule
        .iter()
        .map(|&n| Ok(record.visited_at(n)?.len() as f64 / diamond_size(d, n as u64)? as f64))
        .collect()
}

pub fn full_diamond_experiment(m: &ExperimentManifest) -> Result<FullDiamondReport> {
    m.validate()?;
    let Family::HeavyTail { tail_delta: delta, cap } = m.spec.family else {
        unreachable!("validated")
    };
    let baseline = m.baseline.clone().unwrap_or_else(|| matched_baseline(&m.spec));
    let schedule = m.n_schedule.clone().unwrap();
    let mode = m.mode.unwrap_or(Mode::Aggregate);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..m.replicas.unwrap())
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(m.spec.master_seed, r as u64);
            Ok((
                coverages(&m.spec.with_seed(seed), &schedule, mode)?,
                coverages(&baseline.with_seed(seed), &schedule, mode)?,
            ))
        })
        .collect::<Result<_>>()?;
    let per_n = schedule
        .iter()
        .enumerate()
        .map(|(j, &n)| DiamondScale {
            n,
            heavy_mean: mean(pairs.iter().map(|p| p.0[j])),
            baseline_mean: mean(pairs.iter().map(|p| p.1[j])),
            heavy_wins: pairs.iter().filter(|p| p.0[j] > p.1[j]).count() as f64 / pairs.len() as f64,
        })
        .collect();
    Ok(FullDiamondReport {
        baseline,
        tail_delta: delta,
        heavy_tail_cap: cap,
        per_n,
        heavy: pairs.iter().map(|p| p.0.clone()).collect(),
        baseline_coverage: pairs.iter().map(|p| p.1.clone()).collect(),
    })
}

impl FullDiamondReport {
    fn write(&self, m: &ExperimentManifest, w: &mut Writer) -> Result<Vec<String>> {
        let mut csv = String::from("replica,n,heavy_coverage,baseline_coverage\n");
        let schedule = m.n_schedule.as_ref().unwrap();
        for (r, (h, b)) in self.heavy.iter().zip(&self.baseline_coverage).enumerate() {
            for (j, n) in schedule.iter().enumerate() {
                let _ = writeln!(csv, "{r},{n},{},{}", h[j], b[j]);
            }
        }
        w.text("coverage.csv", &csv)?;
        w.report(m, self)?;
        Ok(self
            .per_n
            .iter()
            .map(|s| {
                format!(
                    "n={}: heavy-tail coverage {:.5}, baseline {:.5}, heavy larger in {:.1}% of pairs",
                    s.n,
                    s.heavy_mean,
                    s.baseline_mean,
                    100.0 * s.heavy_wins
                )
            })
            .collect())
    }
}

// ---------------------------------------------------------------- m-good

/// The scales attached to `m` in the occupation-density condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MGoodParams {
    pub d: usize,
    pub m: u64,
    pub h_d: f64,
    /// `1 / (6 (d - 2))` for `d >= 3`.
    pub eps: Option<f64>,
    pub n_d: f64,
    pub n_hat: f64,
    pub p1: f64,
}

impl MGoodParams {
    pub fn new(d: usize, m: u64, h_d: f64, p1: f64) -> Result<Self> {
        crate::lattice::check_dimension(d).map_err(|_| Error::invalid("d", "dimension must be in 1..=4"))?;
        if !(h_d.is_finite() && h_d > 0.0) {
            return Err(Error::invalid("h_d", "must be a positive number"));
        }
        let ratio = m as f64 / h_d;
        let (eps, n_d, n_hat) = if d >= 3 {
            let eps = 1.0 / (6.0 * (d as f64 - 2.0));
            let n_d = ratio.powf(1.0 / (1.0 + 2.0 * eps));
            (Some(eps), n_d, n_d.powf((1.0 - eps) / 3.0))
        } else {
            let n_d = ratio.sqrt();
            (None, n_d, n_d.powf(1.0 / 8.0))
        };
        if n_d < 1.0 {
            return Err(Error::invalid(
                "m",
                format!("n_d(m) = {n_d} < 1: m = {m} is too small for h_d = {h_d}"),
            ));
        }
        Ok(MGoodParams {
            d,
            m,
            h_d,
            eps,
            n_d,
            n_hat,
            p1,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClauseResult {
    pub clause: String,
    pub regions: usize,
    pub min_ratio: f64,
    pub threshold: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MGoodReport {
    pub params: MGoodParams,
    pub clauses: Vec<ClauseResult>,
    pub m_good: bool,
}

/// Refuse enumerations beyond this many site queries.
const M_GOOD_QUERY_LIMIT: u64 = 200_000_000;

fn euclid_ball(center: &[i64], r: f64, d: usize, out: &mut Vec<SiteCoord>) {
    out.clear();
    let k = r.floor() as i64;
    let r2 = r * r;
    let mut off = vec![-k; d];
    loop {
        let dist2: f64 = off.iter().map(|&v| (v * v) as f64).sum();
        if dist2 <= r2 + 1e-9 {
            let c: Vec<i32> = center.iter().zip(&off).map(|(a, b)| (a + b) as i32).collect();
            out.push(SiteCoord::from(&c));
        }
        let mut i = 0;
        loop {
            if i == d {
                return;
            }
            off[i] += 1;
            if off[i] <= k {
                break;
            }
            off[i] = -k;
            i += 1;
        }
    }
}

fn occupied_ratio(spec: &InitialConfigSpec, sites: &[SiteCoord]) -> f64 {
    let occ = sites.iter().filter(|x| spec.eta_at(x) >= 1).count();
    occ as f64 / sites.len() as f64
}

/// Minimum occupation ratio over Euclidean balls of radius `r` with
/// centers on the lattice `spacing * Z^d` satisfying `center_ok`.
fn ball_clause(
    spec: &InitialConfigSpec,
    r: f64,
    center_reach: f64,
    center_ok: impl Fn(f64) -> bool,
) -> Result<(usize, f64)> {
    let d = spec.dimension;
    let spacing = ((r / 2.0).floor() as i64).max(1);
    let kmax = (center_reach / spacing as f64).floor() as i64;
    let ball_sites = (2.0 * r + 1.0).powi(d as i32);
    let centers = (2.0 * kmax as f64 + 1.0).powi(d as i32);
    if ball_sites * centers > M_GOOD_QUERY_LIMIT as f64 {
        return Err(Error::ResourceLimit {
            message: format!("m-good check would query about {:.0} sites", ball_sites * centers),
            snapshot: None,
        });
    }
    let mut k = vec![-kmax; d];
    let mut regions = 0;
    let mut min_ratio = f64::INFINITY;
    let mut buf = Vec::new();
    loop {
        let c: Vec<i64> = k.iter().map(|v| v * spacing).collect();
        let norm = c.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        if center_ok(norm) {
            euclid_ball(&c, r, d, &mut buf);
            min_ratio = min_ratio.min(occupied_ratio(spec, &buf));
            regions += 1;
        }
        let mut i = 0;
        loop {
            if i == d {
                return Ok((regions, min_ratio));
            }
            k[i] += 1;
            if k[i] <= kmax {
                break;
            }
            k[i] = -kmax;
            i += 1;
        }
    }
}

/// Evaluates the dimension-appropriate clauses of the m-good condition on
/// the configuration of `spec`. Balls are Euclidean with centers on a grid
/// of half-radius spacing.
pub fn m_good_check(spec: &InitialConfigSpec, m: u64, h_d: f64) -> Result<MGoodReport> {
    spec.validate()?;
    let d = spec.dimension;
    let params = MGoodParams::new(d, m, h_d, spec.p1())?;
    let threshold = params.p1 / 2.0;
    let n = params.n_d;
    let mut clauses = Vec::new();
    let mut push = |clause: String, (regions, min_ratio): (usize, f64)| {
        clauses.push(ClauseResult {
            clause,
            regions,
            min_ratio,
            threshold,
            satisfied: min_ratio >= threshold,
        });
    };
    if d <= 2 {
        let r = n.powf(0.25);
        push(format!("balls of radius {r:.4} within {n:.4} of the origin"), ball_clause(spec, r, n, |c| c <= n)?);
    } else {
        let eps = params.eps.unwrap();
        let region = |i: usize| i as f64 * n.powf(0.5 + eps);
        let r = n.powf((1.0 - eps) / 2.0);
        let r1 = region(1);
        push(
            format!("balls of radius {r:.4} inside the region of radius {r1:.4}"),
            ball_clause(spec, r, r1, |c| c + r <= r1)?,
        );
        if d >= 4 {
            for i in 2..=d / 2 {
                let (inner, outer) = (region(i - 1), region(i));
                let mut sites = Vec::new();
                euclid_ball(&vec![0; d], outer, d, &mut sites);
                sites.retain(|x| x.euclid_norm_sq().sqrt() > inner);
                push(
                    format!("annulus {inner:.4} < |x| <= {outer:.4}"),
                    (1, occupied_ratio(spec, &sites)),
                );
            }
        }
    }
    let m_good = clauses.iter().all(|c| c.satisfied);
    Ok(MGoodReport { params, clauses, m_good })
}

fn m_good_study(m: &ExperimentManifest, w: &mut Writer) -> Result<Vec<String>> {
    let h_d = m.h_d.unwrap_or(1.0);
    let reports: Vec<MGoodReport> = m
        .m_values
        .as_ref()
        .unwrap()
        .par_iter()
        .map(|&mv| m_good_check(&m.spec, mv, h_d))
        .collect::<Result<_>>()?;
    let mut csv = String::from("m,n_d,n_hat,clause,regions,min_ratio,threshold,satisfied\n");
    for r in &reports {
        for c in &r.clauses {
            let _ = writeln!(
                csv,
                "{},{},{},\"{}\",{},{},{},{}",
                r.params.m, r.params.n_d, r.params.n_hat, c.clause, c.regions, c.min_ratio, c.threshold, c.satisfied
            );
        }
    }
    w.text("m_good.csv", &csv)?;
    w.report(m, &reports)?;
    Ok(reports
        .iter()
        .map(|r| {
            let min = r.clauses.iter().map(|c| c.min_ratio).fold(f64::INFINITY, f64::min);
            format!(
                "m={}: n_d {:.4}, {} (min ratio {:.4}, threshold {:.4})",
                r.params.m,
                r.params.n_d,
                if r.m_good { "m-good" } else { "not m-good" },
                min,
                r.params.p1 / 2.0
            )
        })
        .collect())
}

// ---------------------------------------------------------------- growth probe

pub const DEFAULT_GROWTH_THRESHOLD: f64 = 0.99;

pub fn default_growth_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 * 0.05).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub grid: Vec<f64>,
    pub n_schedule: Vec<u32>,
    pub threshold: f64,
    /// `frequency[j][g]`: fraction of (replica, probe) pairs whose ball of
    /// radius `n_j * grid[g]` around the probe is visited by `T(0,x) + n_j`.
    pub frequency: Vec<Vec<f64>>,
    /// Probe passages not observed before the horizon (counted as misses).
    pub censored: usize,
    pub trials: usize,
    /// Largest grid value whose frequency at the largest `n` reaches the
    /// threshold.
    pub growth_delta: Option<f64>,
}

/// Radius of the largest L1 ball around `x` visited by time `t` (`None` if
/// `x` itself is not), scanning shells up to `limit`.
fn covered_radius(record: &PassageRecord, x: SiteCoord, t: u32, limit: u32) -> Option<u32> {
    let visited = |y: &SiteCoord| record.first_passage(y).is_some_and(|s| s <= t);
    if !visited(&x) {
        return None;
    }
    let mut shell = Vec::new();
    for r in 1..=limit {
        l1_shell(x, r, &mut shell);
        if !shell.iter().all(visited) {
            return Some(r - 1);
        }
    }
    Some(limit)
}

fn l1_shell(center: SiteCoord, r: u32, out: &mut Vec<SiteCoord>) {
    out.clear();
    for y in crate::lattice::Diamond::centered(center, r as u64).members() {
        if y.l1_dist(&center) == r as u64 {
            out.push(y);
        }
    }
}

pub fn growth_probe(
    spec: &InitialConfigSpec,
    probes: &[SiteCoord],
    n_schedule: &[u32],
    replicas: usize,
    horizon: u32,
    grid: &[f64],
    threshold: f64,
) -> Result<GrowthReport> {
    if !spec.condition_origin {
        return Err(Error::invalid("spec.condition_origin", "the growth probe needs an origin-conditioned spec"));
    }
    let d = spec.dimension;
    let n_max = *n_schedule.last().ok_or_else(|| Error::invalid("n_schedule", "empty"))?;
    let limit = (n_max as f64 * grid.iter().copied().fold(0.0, f64::max)).floor() as u32;
    // radii[r][p][j]
    let radii: Vec<Vec<Vec<Option<u32>>>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let s = replica_spec(spec, r);
            let mut sim = Simulation::new(&s, SiteCoord::origin(d), horizon, Mode::Identity, &RunOptions::default())?;
            sim.run_until_visited(probes)?;
            let partial = sim.record();
            let tx: Vec<Option<u32>> = probes.iter().map(|x| partial.first_passage(x)).collect();
            let end = tx.iter().flatten().max().map(|t| t + n_max).unwrap_or(0);
            sim.run_until_time(end)?;
            let record = sim.into_record();
            Ok(probes
                .iter()
                .zip(&tx)
                .map(|(&x, t)| {
                    n_schedule
                        .iter()
                        .map(|&n| match t {
                            Some(t) if t + n <= record.horizon => covered_radius(&record, x, t + n, limit),
                            _ => None,
                        })
                        .collect()
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let trials = replicas * probes.len();
    let censored = radii.iter().flatten().filter(|row| row.iter().all(|v| v.is_none())).count();
    let frequency: Vec<Vec<f64>> = n_schedule
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            grid.iter()
                .map(|&g| {
                    let need = (n as f64 * g).floor() as u32;
                    let hits = radii.iter().flatten().filter(|row| row[j].is_some_and(|a| a >= need)).count();
                    hits as f64 / trials as f64
                })
                .collect()
        })
        .collect();
    let last = frequency.last().unwrap();
    let growth_delta = grid
        .iter()
        .zip(last)
        .filter(|(_, &f)| f >= threshold)
        .map(|(&g, _)| g)
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.max(g))));
    Ok(GrowthReport {
        grid: grid.to_vec(),
        n_schedule: n_schedule.to_vec(),
        threshold,
        frequency,
        censored,
        trials,
        growth_delta,
    })
}

fn growth_study(m: &ExperimentManifest, w: &mut Writer) -> Result<Vec<String>> {
    let grid = m.growth_delta_grid.clone().unwrap_or_else(default_growth_grid);
    let report = growth_probe(
        &m.spec,
        m.probes.as_ref().unwrap(),
        m.n_schedule.as_ref().unwrap(),
        m.replicas.unwrap(),
        m.horizon.unwrap(),
        &grid,
        m.threshold.unwrap_or(DEFAULT_GROWTH_THRESHOLD),
    )?;
    let mut csv = String::from("n,growth_delta,frequency\n");
    for (j, n) in report.n_schedule.iter().enumerate() {
        for (g, f) in report.grid.iter().zip(&report.frequency[j]) {
            let _ = writeln!(csv, "{n},{g},{f}");
        }
    }
    w.text("growth.csv", &csv)?;
    w.report(m, &report)?;
    Ok(vec![
        match report.growth_delta {
            Some(g) => format!("estimated growth constant: {g}"),
            None => "no growth constant on the grid reaches the threshold".into(),
        },
        format!("censored probes: {} of {}", report.censored, report.trials),
    ])
}

// ---------------------------------------------------------------- tails

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub m: u32,
    pub survival: Proportion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub x0: SiteCoord,
    pub replicas: usize,
    /// `T(0, x0)` per replica (`None`: not reached by the largest m).
    pub times: Vec<Option<u32>>,
    pub curve: Vec<TailPoint>,
}

/// Empirical `P[T(0, x0) >= m]` with Wilson intervals.
pub fn tail_curve(spec: &InitialConfigSpec, x0: SiteCoord, m_grid: &[u32], replicas: usize) -> Result<TailReport> {
    if !spec.condition_origin {
        return Err(Error::invalid("spec.condition_origin", "the tail curve needs an origin-conditioned spec"));
    }
    let horizon = *m_grid.last().ok_or_else(|| Error::invalid("m_grid", "empty"))?;
    let times: Vec<Option<u32>> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let t = passage::passage_time(&replica_spec(spec, r), SiteCoord::origin(spec.dimension), x0, horizon)?;
            Ok(t.finite())
        })
        .collect::<Result<_>>()?;
    let curve = m_grid
        .iter()
        .map(|&m| {
            let k = times.iter().filter(|t| t.is_none_or(|t| t >= m)).count() as u64;
            TailPoint {
                m,
                survival: Proportion::new(k, replicas as u64),
            }
        })
        .collect();
    Ok(TailReport {
        x0,
        replicas,
        times,
        curve,
    })
}

fn tail_study(m: &ExperimentManifest, w: &mut Writer) -> Result<Vec<String>> {
    let report = tail_curve(&m.spec, m.x0.unwrap(), m.m_grid.as_ref().unwrap(), m.replicas.unwrap())?;
    let mut csv = String::from("m,survival,ci_low,ci_high\n");
    for p in &report.curve {
        let _ = writeln!(csv, "{},{},{},{}", p.m, p.survival.estimate, p.survival.ci_low, p.survival.ci_high);
    }
    w.text("tail.csv", &csv)?;
    w.report(m, &report)?;
    Ok(report
        .curve
        .iter()
        .map(|p| format!("P[T >= {}] = {:.5} [{:.5}, {:.5}]", p.m, p.survival.estimate, p.survival.ci_low, p.survival.ci_high))
        .collect())
}

// ---------------------------------------------------------------- oracle

#[derive(Serialize)]
struct OracleSummary {
    horizon: u32,
    leaves: String,
    /// `|xi_horizon|` law as `size -> "num/den"`.
    visited_size: BTreeMap<usize, String>,
}

pub fn finite_config(spec: &InitialConfigSpec, source: SiteCoord) -> Result<FiniteConfig> {
    let overrides = spec
        .overrides
        .as_ref()
        .ok_or_else(|| Error::invalid("spec.overrides", "the oracle needs a finite configuration"))?;
    Ok(FiniteConfig::new(
        spec.dimension,
        source,
        overrides
            .iter()
            .chain(&spec.extra)
            .map(|sc| (sc.site, sc.count)),
    ))
}

fn oracle_study(m: &ExperimentManifest, w: &mut Writer) -> Result<Vec<String>> {
    let d = m.spec.dimension;
    let cfg = finite_config(&m.spec, m.source.unwrap_or(SiteCoord::origin(d)))?;
    let horizon = m.horizon.unwrap();
    let res = oracle::exact_passage_distribution(&cfg, horizon, m.budget.map_or(DEFAULT_LEAF_BUDGET, u128::from))?;
    w.text("oracle.csv", &res.to_csv_string(d))?;
    let summary = OracleSummary {
        horizon,
        leaves: res.leaves.to_string(),
        visited_size: res.visited_size.iter().map(|(k, p)| (*k, p.to_string())).collect(),
    };
    w.report(m, &summary)?;
    let mut lines: Vec<String> = res
        .passage_cdf
        .iter()
        .map(|(y, cdf)| format!("P[T{} <= {horizon}] = {}", y, cdf[horizon as usize]))
        .collect();
    lines.push(format!("enumerated leaves: {}", res.leaves));
    Ok(lines)
}

// ---------------------------------------------------------------- check

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub records_verified: usize,
    pub triples: usize,
    pub holds: usize,
    pub vacuous: usize,
    pub violated: usize,
    pub coupled_pairs: usize,
    pub containment_failures: usize,
    pub violations: Vec<String>,
}

impl CheckReport {
    fn tally(&mut self, v: Verdict, what: impl FnOnce() -> String) {
        self.triples += 1;
        match v {
            Verdict::Holds => self.holds += 1,
            Verdict::Vacuous => self.vacuous += 1,
            Verdict::Violated => {
                self.violated += 1;
                self.violations.push(what());
            }
        }
    }

    pub fn clean(&self) -> bool {
        self.violated == 0 && self.containment_failures == 0 && self.violations.is_empty()
    }
}

/// A uniformly chosen site within L1 distance `window` of `center`.
fn sample_site(seed: u64, stream: u64, center: SiteCoord, window: u32) -> SiteCoord {
    let d = center.dim();
    let side = 2 * window as u64 + 1;
    let mut attempt = 0u64;
    loop {
        let mut c = [0i32; 4];
        for (axis, v) in c.iter_mut().take(d).enumerate() {
            let word = keyed_word(seed, tag::SAMPLING, &[stream, attempt, axis as u64]);
            *v = bounded(word, side) as i32 - window as i32;
        }
        let off = SiteCoord::new(&c[..d]).unwrap();
        if off.l1_norm() <= window as u64 {
            return center + off;
        }
        attempt += 1;
    }
}

/// Picks an occupied site visited in `record` (so `T(x, y)` is finite and
/// `T(y, .)` can be), else any site.
fn sample_visited(seed: u64, stream: u64, record: &PassageRecord, fallback: SiteCoord, window: u32) -> SiteCoord {
    let near: Vec<SiteCoord> = record
        .sites
        .iter()
        .filter(|v| v.eta > 0 && v.site.l1_dist(&record.source) <= window as u64)
        .map(|v| v.site)
        .collect();
    if near.is_empty() {
        return sample_site(seed, stream, fallback, window);
    }
    near[bounded(keyed_word(seed, tag::SAMPLING, &[stream, u64::MAX]), near.len() as u64) as usize]
}

/// Subadditivity on `triples` random triples: `x` uniform among occupied
/// sites in the window around the origin, `y` an occupied site visited from
/// `x` (so `T(x, y)` is finite
/// when possible), `z` uniform in the window around `x`. Triple `i` uses
/// replica seed `i`.
pub fn subadditivity_suite(spec: &InitialConfigSpec, triples: usize, window: u32, horizon: u32) -> Result<CheckReport> {
    let d = spec.dimension;
    let results: Vec<(SiteCoord, SiteCoord, SiteCoord, passage::Subadditivity)> = (0..triples)
        .into_par_iter()
        .map(|i| {
            let s = replica_spec(spec, i);
            let x = (0..64)
                .map(|k| sample_site(s.master_seed, 3 + k, SiteCoord::origin(d), window))
                .find(|x| s.eta_at(x) > 0)
                .unwrap_or(SiteCoord::origin(d));
            let probe = engine::run_until(&s, x, horizon.min(4 * window), Mode::Identity, &[])?;
            let y = sample_visited(s.master_seed, 1, &probe, x, window);
            let z = sample_site(s.master_seed, 2, x, window);
            Ok((x, y, z, passage::subadditivity_check(&s, x, y, z, horizon)?))
        })
        .collect::<Result<_>>()?;
    let mut report = CheckReport::default();
    for (i, (x, y, z, s)) in results.into_iter().enumerate() {
        report.tally(s.verdict, || {
            format!("triple {i}: T({x},{z}) = {} > T({x},{y}) + T({y},{z}) = {} + {}", s.t_xz, s.t_xy, s.t_yz)
        });
    }
    Ok(report)
}

/// Coupled runs with and without one extra particle at the source: the
/// smaller visited set must be contained in the larger at every time.
pub fn coupling_suite(spec: &InitialConfigSpec, pairs: usize, horizon: u32) -> Result<CheckReport> {
    let d = spec.dimension;
    let failures: Vec<Option<String>> = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let s = replica_spec(spec, i);
            let more = s.clone().with_extra(SiteCoord::origin(d), 1);
            let a = engine::run(&s, SiteCoord::origin(d), horizon, Mode::Identity)?;
            let b = engine::run(&more, SiteCoord::origin(d), horizon, Mode::Identity)?;
            verify_record(&s, &a)?;
            verify_record(&more, &b)?;
            Ok(containment_failure(&a, &b).map(|(t, y)| format!("pair {i}: {y} visited at {t} only without the extra particle")))
        })
        .collect::<Result<_>>()?;
    let mut report = CheckReport {
        coupled_pairs: pairs,
        records_verified: 2 * pairs,
        ..CheckReport::default()
    };
    for f in failures.into_iter().flatten() {
        report.containment_failures += 1;
        report.violations.push(f);
    }
    Ok(report)
}

/// Audits a stored record: invariants against the spec, agreement with a
/// replay, and subadditivity using the stored times for `T(x, .)`.
pub fn audit_record(spec: &InitialConfigSpec, record: &PassageRecord, triples: usize, window: u32) -> Result<CheckReport> {
    let mut report = CheckReport::default();
    if record.config_digest != spec.digest() {
        report.violations.push("record digest does not match the spec".into());
    }
    if let Err(e) = verify_record(spec, record) {
        report.violations.push(e.to_string());
    }
    report.records_verified = 1;
    let x = record.source;
    let horizon = record.horizon;
    let stored = |y: &SiteCoord| CensoredTime::from_option(record.first_passage(y), horizon);
    for i in 0..triples {
        let y = sample_visited(spec.master_seed, 2 * i as u64 + 1, record, x, window);
        // z from the record too, so corrupted rows are exercised
        let z = sample_visited(spec.master_seed, 2 * i as u64 + 2, record, x, window);
        let t_yz = passage::passage_time(spec, y, z, horizon)?;
        let (t_xy, t_xz) = (stored(&y), stored(&z));
        report.tally(judge(t_xz, t_xy, t_yz, horizon), || {
            format!("T({x},{z}) = {t_xz} > T({x},{y}) + T({y},{z}) = {t_xy} + {t_yz}")
        });
    }
    let replay = engine::run(spec, x, horizon, record.mode)?;
    if replay.sites != record.sites {
        let first = replay
            .sites
            .iter()
            .zip(&record.sites)
            .find(|(a, b)| a != b)
            .map(|(a, _)| format!("{} at {}", a.site, a.time))
            .unwrap_or_else(|| "length".into());
        report.violations.push(format!("record differs from its replay (first difference: {first})"));
    }
    Ok(report)
}

fn check_study(m: &ExperimentManifest, w: &mut Writer) -> Result<Vec<String>> {
    let horizon = m.horizon.unwrap();
    let window = m.window.unwrap_or(10);
    let triples = m.triples.unwrap_or(100);
    let report = if let Some(path) = &m.record {
        let record = PassageRecord::read_csv(path)?;
        audit_record(&m.spec, &record, triples, window)?
    } else {
        let mut a = subadditivity_suite(&m.spec, triples, window, horizon)?;
        let b = coupling_suite(&m.spec, m.replicas.unwrap_or(triples), horizon)?;
        a.coupled_pairs = b.coupled_pairs;
        a.records_verified += b.records_verified;
        a.containment_failures = b.containment_failures;
        a.violations.extend(b.violations);
        a
    };
    w.report(m, &report)?;
    let lines = vec![
        format!(
            "subadditivity: {} triples, {} hold, {} vacuous, {} violated",
            report.triples, report.holds, report.vacuous, report.violated
        ),
        format!("coupling: {} pairs, {} containment failures", report.coupled_pairs, report.containment_failures),
        format!("records verified: {}", report.records_verified),
    ];
    if !report.clean() {
        return Err(Error::InvariantViolation(format!(
            "{} problem(s); first: {}",
            report.violations.len(),
            report.violations[0]
        )));
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(kind: ExperimentKind, spec: InitialConfigSpec, dir: &Path) -> ExperimentManifest {
        ExperimentManifest {
            output_dir: Some(dir.to_path_buf()),
            ..ExperimentManifest::new(kind, spec)
        }
    }

    #[test]
    fn m_good_constants() {
        let p = MGoodParams::new(1, 100, 1.0, 1.0).unwrap();
        assert!((p.n_d - 10.0).abs() < 1e-12);
        assert!((p.n_hat - 10f64.powf(0.125)).abs() < 1e-12);
        let p3 = MGoodParams::new(3, 1000, 2.0, 0.5).unwrap();
        assert!((p3.eps.unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert!((p3.n_d - 500f64.powf(0.75)).abs() < 1e-9);
        let p4 = MGoodParams::new(4, 100, 1.0, 0.5).unwrap();
        assert!((p4.eps.unwrap() - 1.0 / 12.0).abs() < 1e-15);
        assert!((p4.n_hat - p4.n_d.powf((1.0 - 1.0 / 12.0) / 3.0)).abs() < 1e-12);
        assert!(MGoodParams::new(2, 1, 4.0, 1.0).is_err());
    }

    #[test]
    fn m_good_trivial_configurations() {
        for d in 1..=4 {
            let ones = InitialConfigSpec::new(d, Family::Constant { c: 1 }, 0);
            let m = if d == 4 { 60 } else { 400 };
            let r = m_good_check(&ones, m, 1.0).unwrap();
            assert!(r.m_good, "d={d}");
            assert!(r.clauses.iter().all(|c| c.min_ratio == 1.0));
        }
        let empty = InitialConfigSpec::new(2, Family::Bernoulli { p: 0.5 }, 0).with_overrides([]);
        let r = m_good_check(&empty, 400, 1.0).unwrap();
        assert!(!r.m_good);
        assert_eq!(r.clauses[0].min_ratio, 0.0);
    }

    #[test]
    fn tail_curve_basics() {
        let spec = InitialConfigSpec::new(2, Family::Bernoulli { p: 0.5 }, 4).conditioned();
        let x0 = SiteCoord::from(&[3, 0]);
        let grid = [0, 3, 5, 8, 12, 20];
        let rep = tail_curve(&spec, x0, &grid, 200).unwrap();
        assert_eq!(rep.curve[0].survival.estimate, 1.0);
        assert_eq!(rep.curve[1].survival.estimate, 1.0);
        assert!(rep.curve.windows(2).all(|w| w[0].survival.estimate >= w[1].survival.estimate));
        for p in &rep.curve {
            let below = rep.times.iter().filter(|t| t.is_some_and(|t| t < p.m)).count();
            assert_eq!(p.survival.successes, 200 - below as u64);
        }
    }

    #[test]
    fn growth_probe_extremes() {
        let spec = InitialConfigSpec::new(2, Family::Bernoulli { p: 0.5 }, 1).conditioned();
        let probes = [SiteCoord::from(&[4, 0]), SiteCoord::from(&[0, -4])];
        let rep = growth_probe(&spec, &probes, &[10, 20], 10, 400, &[0.999], 0.99).unwrap();
        assert_eq!(rep.growth_delta, None);
        let rep = growth_probe(&spec, &probes, &[10, 20], 10, 400, &default_growth_grid(), 0.5).unwrap();
        if let Some(g) = rep.growth_delta {
            assert!(g > 0.0 && g < 1.0);
        }
        assert!(rep.frequency.iter().flatten().all(|f| (0.0..=1.0).contains(f)));
    }

    #[test]
    fn manifest_schema_errors_carry_paths() {
        let bad_type = r#"{"kind":"run","spec":{"dimension":2,"family":{"type":"bernoulli","p":"x"},"master_seed":1},"horizon":3}"#;
        match ExperimentManifest::from_json(bad_type) {
            Err(Error::Schema { path, .. }) => assert!(path.starts_with("manifest.spec.family"), "{path}"),
            other => panic!("{other:?}"),
        }
        let unknown = r#"{"kind":"run","spec":{"dimension":1,"family":{"type":"constant","c":1},"master_seed":1},"horizon":3,"bogus":1}"#;
        assert!(matches!(ExperimentManifest::from_json(unknown), Err(Error::Schema { .. })));
        let m = ExperimentManifest::new(ExperimentKind::Run, InitialConfigSpec::new(1, Family::Constant { c: 1 }, 0));
        match m.validate() {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "manifest.horizon"),
            other => panic!("{other:?}"),
        }
        let heavy = InitialConfigSpec::new(2, Family::HeavyTail { tail_delta: 2.0, cap: 1 << 32 }, 0);
        let mut fd = ExperimentManifest::new(ExperimentKind::FullDiamond, heavy);
        fd.replicas = Some(2);
        fd.n_schedule = Some(vec![0, 5]);
        match fd.validate() {
            Err(Error::InvalidInput { field, .. }) => assert_eq!(field, "spec.family.tail_delta"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn full_diamond_small() {
        let dir = tempfile::tempdir().unwrap();
        let heavy = InitialConfigSpec::new(2, Family::HeavyTail { tail_delta: 1.5, cap: 1 << 32 }, 3).conditioned();
        let mut m = manifest(ExperimentKind::FullDiamond, heavy, dir.path());
        m.replicas = Some(4);
        m.n_schedule = Some(vec![0, 10, 20]);
        let rep = full_diamond_experiment(&m).unwrap();
        assert_eq!(rep.baseline.family, Family::Bernoulli { p: 1.0 });
        assert_eq!(rep.per_n[0].heavy_mean, 1.0);
        assert_eq!(rep.per_n[0].baseline_mean, 1.0);
        for row in rep.heavy.iter().chain(&rep.baseline_coverage) {
            assert!(row.iter().all(|c| (0.0..=1.0).contains(c)));
        }
    }

    #[test]
    fn executing_twice_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let spec = InitialConfigSpec::new(2, Family::Bernoulli { p: 0.5 }, 11).conditioned();
        let mut m = manifest(ExperimentKind::Shape, spec, dir.path());
        m.replicas = Some(3);
        m.n_schedule = Some(vec![10, 20]);
        m.horizon = Some(60);
        let a = execute(&m).unwrap();
        let first: Vec<Vec<u8>> = a.files.iter().map(|f| std::fs::read(f).unwrap()).collect();
        let b = execute(&m).unwrap();
        let second: Vec<Vec<u8>> = b.files.iter().map(|f| std::fs::read(f).unwrap()).collect();
        assert_eq!(a.files, b.files);
        assert_eq!(first, second);
        let report: serde_json::Value = serde_json::from_slice(&first[a.files.iter().position(|f| f.ends_with("report.json")).unwrap()]).unwrap();
        assert!(report["results"]["censored_per_direction"].is_object());
        assert!(report["manifest"]["kind"] == "shape");
    }

    #[test]
    fn corrupted_record_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let spec = InitialConfigSpec::new(1, Family::Constant { c: 1 }, 5);
        let record = engine::run(&spec, SiteCoord::origin(1), 40, Mode::Identity).unwrap();
        let clean = audit_record(&spec, &record, 30, 10).unwrap();
        assert!(clean.clean(), "{:?}", clean.violations);
        // push one far site's passage time later than any chain allows
        let mut bad = record.clone();
        let i = bad.sites.iter().position(|v| v.site.l1_norm() == 3).unwrap();
        bad.sites[i].time = 40;
        let path = dir.path().join("bad.csv");
        bad.write_csv(&path).unwrap();
        let reread = PassageRecord::read_csv(&path).unwrap();
        let report = audit_record(&spec, &reread, 30, 10).unwrap();
        assert!(!report.clean());
    }
}
