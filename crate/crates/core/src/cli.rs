//! Command-line front end: every subcommand builds (or loads) an
//! [`ExperimentManifest`], applies flag overrides, and executes it.
//!
//! Exit codes: 0 success, 1 detected invariant violation, 2 invalid input,
//! 3 resource limit.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::engine::Mode;
use crate::error::{Error, Result};
use crate::experiments::{execute, ExperimentKind, ExperimentManifest};
use crate::lattice::SiteCoord;
use crate::randomness::{Family, InitialConfigSpec, DEFAULT_HEAVY_TAIL_CAP};

#[derive(Debug, Parser)]
#[command(name = "frog", version, about = "Frog model simulator on Z^d")]
pub struct Cli {
    /// Worker threads for replica parallelism (outputs do not depend on it).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute a manifest of any kind.
    Exec {
        #[arg(value_name = "MANIFEST")]
        path: PathBuf,
        #[command(flatten)]
        args: Overrides,
    },
    /// Single simulation; writes the passage record.
    Run(Overrides),
    /// Time-constant estimates along directions.
    Mu(Overrides),
    /// Shape metrics and limit-shape estimate.
    Shape(Overrides),
    /// Heavy-tail full-diamond comparison.
    Diamond(Overrides),
    /// m-good condition on the configuration.
    Mgood(Overrides),
    /// Local growth probe.
    Probe(Overrides),
    /// Passage-time tail curve.
    Tails(Overrides),
    /// Exact enumeration on a finite configuration.
    Oracle(Overrides),
    /// Invariant suite (subadditivity, coupling, record audit).
    Check(Overrides),
}

/// Flags mirroring the manifest fields; each overrides the manifest value.
/// Site lists use `;` between sites and `,` between coordinates.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub dimension: Option<usize>,
    /// e.g. `bernoulli:0.5`, `constant:1`, `poisson:2`, `heavy_tail:1.5[:cap]`.
    #[arg(long, value_parser = parse_family)]
    pub family: Option<Family>,
    /// Overrides `spec.master_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub condition_origin: Option<bool>,
    /// Finite configuration, e.g. `-1=1;0=1;1=2`.
    #[arg(long, value_parser = parse_counts, allow_hyphen_values = true)]
    pub overrides: Option<List<(SiteCoord, u64)>>,
    #[arg(long = "out")]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub horizon: Option<u32>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long, value_parser = parse_u32_list)]
    pub n_schedule: Option<List<u32>>,
    #[arg(long, value_parser = parse_sites, allow_hyphen_values = true)]
    pub directions: Option<List<SiteCoord>>,
    #[arg(long, value_parser = parse_site, allow_hyphen_values = true)]
    pub source: Option<SiteCoord>,
    #[arg(long)]
    pub ray: Option<bool>,
    /// Baseline family for `diamond` (same dimension, seed, conditioning).
    #[arg(long, value_parser = parse_family)]
    pub baseline: Option<Family>,
    #[arg(long, value_parser = parse_u64_list)]
    pub m_values: Option<List<u64>>,
    #[arg(long)]
    pub h_d: Option<f64>,
    #[arg(long, value_parser = parse_sites, allow_hyphen_values = true)]
    pub probes: Option<List<SiteCoord>>,
    #[arg(long, value_parser = parse_f64_list)]
    pub growth_delta_grid: Option<List<f64>>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_parser = parse_site, allow_hyphen_values = true)]
    pub x0: Option<SiteCoord>,
    #[arg(long, value_parser = parse_u32_list)]
    pub m_grid: Option<List<u32>>,
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long)]
    pub triples: Option<usize>,
    #[arg(long)]
    pub window: Option<u32>,
    #[arg(long)]
    pub record: Option<PathBuf>,
}

/// A comma- or semicolon-separated value taken as one argument.
#[derive(Clone, Debug, PartialEq)]
pub struct List<T>(pub Vec<T>);

fn list<T: std::str::FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<T>().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}

fn parse_u32_list(s: &str) -> std::result::Result<List<u32>, String> {
    list(s).map(List)
}

fn parse_u64_list(s: &str) -> std::result::Result<List<u64>, String> {
    list(s).map(List)
}

fn parse_f64_list(s: &str) -> std::result::Result<List<f64>, String> {
    list(s).map(List)
}

fn parse_site(s: &str) -> std::result::Result<SiteCoord, String> {
    let c: Vec<i32> = list(s)?;
    SiteCoord::new(&c).map_err(|e| e.to_string())
}

fn parse_sites(s: &str) -> std::result::Result<List<SiteCoord>, String> {
    s.split(';').filter(|t| !t.trim().is_empty()).map(parse_site).collect::<std::result::Result<_, _>>().map(List)
}

fn parse_counts(s: &str) -> std::result::Result<List<(SiteCoord, u64)>, String> {
    s.split(';')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let (site, count) = t.split_once('=').ok_or_else(|| format!("`{t}`: expected site=count"))?;
            Ok((parse_site(site)?, count.trim().parse().map_err(|e| format!("`{count}`: {e}"))?))
        })
        .collect::<std::result::Result<_, _>>()
        .map(List)
}

pub fn parse_family(s: &str) -> std::result::Result<Family, String> {
    let mut parts = s.split(':');
    let name = parts.next().unwrap_or_default();
    let args: Vec<&str> = parts.collect();
    let num = |i: usize| -> std::result::Result<f64, String> {
        args.get(i)
            .ok_or_else(|| format!("`{s}`: missing parameter"))?
            .parse()
            .map_err(|e| format!("`{s}`: {e}"))
    };
    let family = match name {
        "constant" => Family::Constant {
            c: args.first().ok_or("constant needs a count")?.parse().map_err(|e| format!("`{s}`: {e}"))?,
        },
        "bernoulli" => Family::Bernoulli { p: num(0)? },
        "geometric" => Family::Geometric { p: num(0)? },
        "poisson" => Family::Poisson { lambda: num(0)? },
        "heavy_tail" => Family::HeavyTail {
            tail_delta: num(0)?,
            cap: match args.get(1) {
                Some(c) => c.parse().map_err(|e| format!("`{s}`: {e}"))?,
                None => DEFAULT_HEAVY_TAIL_CAP,
            },
        },
        _ => return Err(format!("unknown family `{name}`")),
    };
    if args.len() > if name == "heavy_tail" { 2 } else { 1 } {
        return Err(format!("`{s}`: too many parameters"));
    }
    Ok(family)
}

impl Overrides {
    /// Loads the manifest (if any), or starts a fresh one of `kind`, then
    /// applies every flag that was given.
    pub fn build(self, kind: Option<ExperimentKind>) -> Result<ExperimentManifest> {
        let mut m = match &self.manifest {
            Some(path) => ExperimentManifest::load(path)?,
            None => {
                let kind = kind.ok_or_else(|| Error::invalid("manifest", "no manifest given"))?;
                let dimension = self
                    .dimension
                    .ok_or_else(|| Error::invalid("--dimension", "required without --manifest"))?;
                let family = self
                    .family
                    .clone()
                    .ok_or_else(|| Error::invalid("--family", "required without --manifest"))?;
                ExperimentManifest::new(kind, InitialConfigSpec::new(dimension, family, 0))
            }
        };
        if let Some(kind) = kind {
            if m.kind != kind {
                return Err(Error::Schema {
                    path: "manifest.kind".into(),
                    message: format!("expected `{}`, found `{}`", kind.name(), m.kind.name()),
                });
            }
        }
        if let Some(d) = self.dimension {
            m.spec.dimension = d;
        }
        if let Some(f) = self.family {
            m.spec.family = f;
        }
        if let Some(s) = self.seed {
            m.spec.master_seed = s;
        }
        if let Some(c) = self.condition_origin {
            m.spec.condition_origin = c;
        }
        if let Some(o) = self.overrides {
            m.spec = m.spec.with_overrides(o.0);
        }
        if let Some(f) = self.baseline {
            m.baseline = Some(InitialConfigSpec {
                family: f,
                overrides: None,
                extra: Vec::new(),
                ..m.spec.clone()
            });
        }
        macro_rules! set {
            ($($f:ident),*) => {$(
                if self.$f.is_some() {
                    m.$f = self.$f;
                }
            )*};
        }
        macro_rules! set_list {
            ($($f:ident),*) => {$(
                if let Some(List(v)) = self.$f {
                    m.$f = Some(v);
                }
            )*};
        }
        set!(name, output_dir, mode, horizon, replicas, source, ray, h_d, threshold, x0, budget, triples, window, record);
        set_list!(n_schedule, directions, m_values, probes, growth_delta_grid, m_grid);
        Ok(m)
    }
}

impl Command {
    fn split(self) -> (Option<ExperimentKind>, Overrides) {
        match self {
            Command::Exec { path, mut args } => {
                args.manifest = Some(path);
                (None, args)
            }
            Command::Run(a) => (Some(ExperimentKind::Run), a),
            Command::Mu(a) => (Some(ExperimentKind::Mu), a),
            Command::Shape(a) => (Some(ExperimentKind::Shape), a),
            Command::Diamond(a) => (Some(ExperimentKind::FullDiamond), a),
            Command::Mgood(a) => (Some(ExperimentKind::MGood), a),
            Command::Probe(a) => (Some(ExperimentKind::GrowthProbe), a),
            Command::Tails(a) => (Some(ExperimentKind::TailCurve), a),
            Command::Oracle(a) => (Some(ExperimentKind::Oracle), a),
            Command::Check(a) => (Some(ExperimentKind::Check), a),
        }
    }
}

/// Builds, executes and reports; returns the process exit code.
pub fn run_cli(cli: Cli) -> i32 {
    let workers = cli.workers;
    let (kind, args) = cli.command.split();
    let result = args.build(kind).and_then(|m| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.unwrap_or(0))
            .build()
            .map_err(|e| Error::invalid("--workers", e.to_string()))?;
        pool.install(|| execute(&m))
    });
    match result {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            println!("outputs: {}", outcome.output_dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Entry point for the binary: parses `args` (including the program name).
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run_cli(cli),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn family_strings() {
        assert_eq!(parse_family("bernoulli:0.5").unwrap(), Family::Bernoulli { p: 0.5 });
        assert_eq!(parse_family("constant:2").unwrap(), Family::Constant { c: 2 });
        assert_eq!(
            parse_family("heavy_tail:1.5").unwrap(),
            Family::HeavyTail {
                tail_delta: 1.5,
                cap: DEFAULT_HEAVY_TAIL_CAP
            }
        );
        assert_eq!(parse_family("heavy_tail:1.5:99").unwrap(), Family::HeavyTail { tail_delta: 1.5, cap: 99 });
        assert!(parse_family("bernoulli").is_err());
        assert!(parse_family("bernoulli:0.5:1").is_err());
        assert!(parse_family("zipf:2").is_err());
    }

    #[test]
    fn site_lists() {
        assert_eq!(parse_sites("1,0;-1,2").unwrap().0, vec![SiteCoord::from(&[1, 0]), SiteCoord::from(&[-1, 2])]);
        let c = parse_counts("-1=1;0=2").unwrap().0;
        assert_eq!(c, vec![(SiteCoord::from(&[-1]), 1), (SiteCoord::from(&[0]), 2)]);
        assert!(parse_counts("0").is_err());
    }

    #[test]
    fn flags_override_manifest() {
        let cli = Cli::try_parse_from([
            "frog", "--workers", "2", "run", "--dimension", "2", "--family", "bernoulli:0.5", "--seed", "9",
            "--horizon", "7", "--source", "-1,3",
        ])
        .unwrap();
        assert_eq!(cli.workers, Some(2));
        let (kind, args) = cli.command.split();
        let m = args.build(kind).unwrap();
        assert_eq!(m.kind, ExperimentKind::Run);
        assert_eq!(m.spec.master_seed, 9);
        assert_eq!(m.horizon, Some(7));
        assert_eq!(m.source, Some(SiteCoord::from(&[-1, 3])));
        m.validate().unwrap();
    }

    #[test]
    fn exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("o");
        let out = out.to_str().unwrap();
        let base = ["frog", "run", "--dimension", "1", "--family", "constant:1", "--out", out];
        assert_eq!(main_from(base.iter().chain(&["--horizon", "5"])), 0);
        assert_eq!(main_from(base.iter().chain(&["--ray", "true", "--horizon", "5"])), 2);
        assert_eq!(main_from(["frog", "diamond", "--dimension", "2", "--family", "heavy_tail:2.5", "--replicas", "1", "--n-schedule", "1"]), 2);
        assert_eq!(main_from(["frog", "bogus"]), 2);
    }
}
