//! End-to-end runs of the binary: exit codes, artifact layout, frozen CSV
//! headers and a fixed-seed golden summary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use msplace::topology::InfrastructureNetwork;
use msplace::workload::ServiceRequest;

const RUNS_HEADER: &str = "repetition,seed,total_failures,mean_bandwidth,placements_succeeded,placements_rejected,\
hist_below_0.99,hist_0.99_0.999,hist_0.999_0.9999,hist_0.9999_1";
const SUMMARY_HEADER: &str = "axis,value,algorithm,mean_total_failures,mean_bandwidth,success_rate";
const SERIES_HEADER: &str = "t,cumulative_failures,mean_bandwidth";

const SMALL: [&str; 10] = ["--nodes", "12", "--requests", "15", "--repetitions", "3", "--seed", "5", "--edge-prob", "0.3"];

fn msplace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msplace"))
        .args(args)
        .env_remove("MSPLACE_OUTPUT_DIR")
        .output()
        .expect("binary runs")
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

fn simulate_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--output", dir.to_str().unwrap()];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    msplace(&args)
}

#[test]
fn simulate_writes_frozen_headers() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate_into(dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(first_line(&dir.path().join("runs.csv")), RUNS_HEADER);
    assert_eq!(first_line(&dir.path().join("summary.csv")), SUMMARY_HEADER);
    assert_eq!(first_line(&dir.path().join("series.csv")), SERIES_HEADER);
    let runs = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 4);
}

#[test]
fn simulate_matches_golden_summary() {
    let dir = tempfile::tempdir().unwrap();
    assert!(simulate_into(dir.path(), &["--algorithm", "DAIP"]).status.success());
    let got = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let want = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/simulate_daip_summary.csv")).unwrap();
    assert_eq!(got, want);
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(simulate_into(a.path(), &["--algorithm", "RRSP"]).status.success());
    assert!(simulate_into(b.path(), &["--algorithm", "RRSP"]).status.success());
    for f in ["runs.csv", "series.csv", "summary.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn output_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate"];
    args.extend_from_slice(&SMALL);
    let out = Command::new(env!("CARGO_BIN_EXE_msplace"))
        .args(&args)
        .env("MSPLACE_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("summary.csv").exists());
}

#[test]
fn sweep_writes_one_row_per_point_and_algorithm() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"base": {"node_count": 10, "request_count": 10, "repetitions": 2},
            "sweep": {"edge_prob": [0.3, 0.5]},
            "algorithms": ["SRP", "Grd"]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = msplace(&["sweep", "--spec", spec.to_str().unwrap(), "--output", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], SUMMARY_HEADER);
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("edge_prob,0.3,SRP,"));
    assert!(lines[4].starts_with("edge_prob,0.5,Grd,"));
    assert_eq!(first_line(&out_dir.join("runs/0.5_Grd.csv")), RUNS_HEADER);
    assert_eq!(first_line(&out_dir.join("runs/0.3_SRP_series.csv")), SERIES_HEADER);
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(&spec, r#"{"algorithms": []}"#).unwrap();
    assert_eq!(msplace(&["sweep", "--spec", spec.to_str().unwrap()]).status.code(), Some(1));
    fs::write(&spec, r#"{"algorithms": ["SRP"], "sweep": {"edge_prob": [0.2], "node_count": [30]}}"#).unwrap();
    assert_eq!(msplace(&["sweep", "--spec", spec.to_str().unwrap()]).status.code(), Some(1));
    let bad = msplace(&["simulate", "--edge-prob", "1.5", "--output", dir.path().to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, "{ not json").unwrap();
    assert_eq!(msplace(&["simulate", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"node_count": 9, "edge_prob": 0.4, "seed": 3}"#).unwrap();
    let out = msplace(&["gen-topology", "--config", cfg.to_str().unwrap(), "--nodes", "7"]);
    assert!(out.status.success());
    let net = InfrastructureNetwork::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(net.node_count(), 7);
}

#[test]
fn generated_artifacts_parse() {
    let dir = tempfile::tempdir().unwrap();
    let topo = dir.path().join("topo.json");
    let wl = dir.path().join("wl.json");
    assert!(msplace(&["gen-topology", "--nodes", "15", "--seed", "2", "--out", topo.to_str().unwrap()]).status.success());
    assert!(msplace(&["gen-workload", "--nodes", "15", "--seed", "2", "--requests", "6", "--out", wl.to_str().unwrap()])
        .status
        .success());
    let net = InfrastructureNetwork::from_json(&fs::read_to_string(topo).unwrap()).unwrap();
    let reqs: Vec<ServiceRequest> = serde_json::from_str(&fs::read_to_string(wl).unwrap()).unwrap();
    assert_eq!(reqs.len(), 6);
    assert!(reqs.iter().all(|r| net.access_nodes.contains(&r.access_node)));
}

#[test]
fn validate_passes_and_detects_bias() {
    let ok = msplace(&["validate", "--quick"]);
    let text = String::from_utf8_lossy(&ok.stdout);
    assert_eq!(ok.status.code(), Some(0), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5);
    let biased = msplace(&["validate", "--quick", "--bias", "0.01"]);
    assert_eq!(biased.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&biased.stdout).contains("FAIL analytic-vs-monte-carlo"));
}
