use std::path::Path;
use std::process::{Command, Output};

use frog_model::{run, Family, InitialConfigSpec, Mode, SiteCoord};

fn frog(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frog"))
        .args(args)
        .env("FROG_OUTPUT_ROOT", root)
        .output()
        .unwrap()
}

fn manifest(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("manifests")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

#[test]
fn shape_manifest_succeeds_and_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = frog(&["exec", &manifest("shape_d2.json")], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("shape_d2");
    for f in ["report.json", "manifest.json", "metrics.csv", "mu_samples.csv", "shape.svg"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("n=100: coverage")));
}

#[test]
fn subcommand_flags_override_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("tails");
    let out = frog(
        &[
            "--workers", "2", "tails", "--manifest", &manifest("tail_curve_d2.json"), "--replicas", "20", "--seed", "99",
            "--out", out_dir.to_str().unwrap(),
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["manifest"]["replicas"], 20);
    assert_eq!(report["manifest"]["spec"]["master_seed"], 99);
    assert_eq!(report["results"]["times"].as_array().unwrap().len(), 20);
}

#[test]
fn wrong_subcommand_for_manifest_kind_is_invalid_input() {
    let tmp = tempfile::tempdir().unwrap();
    let out = frog(&["mu", "--manifest", &manifest("shape_d2.json")], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest.kind"));
}

#[test]
fn tail_exponent_at_least_dimension_is_invalid_input() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("m.json");
    std::fs::write(
        &path,
        r#"{"kind":"full_diamond","spec":{"dimension":2,"family":{"type":"heavy_tail","tail_delta":2.0},
            "master_seed":1,"condition_origin":true},"replicas":2,"n_schedule":[5,10]}"#,
    )
    .unwrap();
    let out = frog(&["exec", path.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tail_delta"));
}

#[test]
fn schema_errors_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("m.json");
    std::fs::write(
        &path,
        r#"{"kind":"mu","spec":{"dimension":2,"family":{"type":"bernoulli","p":0.5},"master_seed":1},
            "replicas":"many","n_schedule":[5],"horizon":50}"#,
    )
    .unwrap();
    let out = frog(&["exec", path.to_str().unwrap()], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest.replicas"));
}

#[test]
fn oracle_budget_exhaustion_is_a_resource_limit() {
    let tmp = tempfile::tempdir().unwrap();
    let out = frog(
        &["oracle", "--manifest", &manifest("oracle_d1.json"), "--horizon", "12", "--budget", "1000"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn corrupted_record_is_an_invariant_violation() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = InitialConfigSpec::new(1, Family::Bernoulli { p: 0.5 }, 3).conditioned();
    let mut record = run(&spec, SiteCoord::origin(1), 60, Mode::Identity).unwrap();
    let path = tmp.path().join("record.csv");
    record.write_csv(&path).unwrap();
    let args = |p: &str| {
        vec![
            "check".to_string(),
            "--dimension".into(),
            "1".into(),
            "--family".into(),
            "bernoulli:0.5".into(),
            "--condition-origin".into(),
            "true".into(),
            "--seed".into(),
            "3".into(),
            "--horizon".into(),
            "60".into(),
            "--record".into(),
            p.into(),
            "--triples".into(),
            "50".into(),
        ]
    };
    let clean = Command::new(env!("CARGO_BIN_EXE_frog"))
        .args(args(path.to_str().unwrap()))
        .env("FROG_OUTPUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(clean.status.code(), Some(0), "{}", String::from_utf8_lossy(&clean.stderr));

    // delay a site two steps from the origin so x -> y -> z beats it
    let i = record.sites.iter().position(|v| v.site.l1_norm() == 2).unwrap();
    record.sites[i].time = 59;
    let bad = tmp.path().join("bad.csv");
    record.write_csv(&bad).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_frog"))
        .args(args(bad.to_str().unwrap()))
        .env("FROG_OUTPUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("check").join("report.json").is_file());
}

#[test]
fn run_subcommand_without_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = frog(
        &["run", "--dimension", "3", "--family", "poisson:1", "--seed", "4", "--horizon", "15", "--mode", "aggregate"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let record = frog_model::PassageRecord::read_csv(&tmp.path().join("run").join("record.csv")).unwrap();
    assert_eq!(record.dimension, 3);
    assert_eq!(record.horizon, 15);
}
