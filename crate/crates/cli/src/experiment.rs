//! Experiment specifications, sweep orchestration and CSV artifacts.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use msplace::placement::{Algorithm, Mechanism};
use msplace::simulator::{run_batch, BatchResult, SimConfig, HISTOGRAM_LABELS};
use msplace::workload::BackupMode;
use serde::{Deserialize, Serialize};

pub const RUNS_HEADER: &str = "repetition,seed,total_failures,mean_bandwidth,placements_succeeded,placements_rejected,\
hist_below_0.99,hist_0.99_0.999,hist_0.999_0.9999,hist_0.9999_1";
pub const SUMMARY_HEADER: &str = "axis,value,algorithm,mean_total_failures,mean_bandwidth,success_rate";

/// The one parameter a sweep varies. Serialized as a single-key object such
/// as `{"edge_prob": [0.1, 0.2]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepAxis {
    EdgeProb(Vec<f64>),
    NodeCount(Vec<usize>),
    CpuMultiplier(Vec<f64>),
    BwMultiplier(Vec<f64>),
    BackupMode(Vec<BackupMode>),
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::EdgeProb(_) => "edge_prob",
            SweepAxis::NodeCount(_) => "node_count",
            SweepAxis::CpuMultiplier(_) => "cpu_multiplier",
            SweepAxis::BwMultiplier(_) => "bw_multiplier",
            SweepAxis::BackupMode(_) => "backup_mode",
        }
    }

    /// `(label, configuration)` for every point.
    fn points(&self, base: &SimConfig) -> Vec<(String, SimConfig)> {
        fn each<T: Copy>(xs: &[T], base: &SimConfig, label: impl Fn(T) -> String, set: impl Fn(&mut SimConfig, T)) -> Vec<(String, SimConfig)> {
            xs.iter()
                .map(|&x| {
                    let mut c = base.clone();
                    set(&mut c, x);
                    (label(x), c)
                })
                .collect()
        }
        match self {
            SweepAxis::EdgeProb(xs) => each(xs, base, |x| x.to_string(), |c, x| c.edge_prob = x),
            SweepAxis::NodeCount(xs) => each(xs, base, |x| x.to_string(), |c, x| c.node_count = x),
            SweepAxis::CpuMultiplier(xs) => each(xs, base, |x| x.to_string(), |c, x| c.workload.cpu_scale = x),
            SweepAxis::BwMultiplier(xs) => each(xs, base, |x| x.to_string(), |c, x| c.workload.bw_scale = x),
            SweepAxis::BackupMode(xs) => each(xs, base, backup_label, |c, x| c.workload.backup_mode = x),
        }
    }

    fn is_empty(&self) -> bool {
        match self {
            SweepAxis::EdgeProb(v) => v.is_empty(),
            SweepAxis::NodeCount(v) => v.is_empty(),
            SweepAxis::CpuMultiplier(v) => v.is_empty(),
            SweepAxis::BwMultiplier(v) => v.is_empty(),
            SweepAxis::BackupMode(v) => v.is_empty(),
        }
    }
}

fn backup_label(mode: BackupMode) -> String {
    match mode {
        BackupMode::Full => "full".to_string(),
        BackupMode::Random => "random".to_string(),
        BackupMode::Fixed(n) => format!("fixed-{n}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub base: SimConfig,
    /// No axis runs the base configuration once per algorithm.
    #[serde(default)]
    pub sweep: Option<SweepAxis>,
    pub algorithms: Vec<Algorithm>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.algorithms.is_empty() {
            return Err("algorithms must not be empty".to_string());
        }
        if self.sweep.as_ref().is_some_and(SweepAxis::is_empty) {
            return Err("sweep axis has no values".to_string());
        }
        for (label, c) in self.points() {
            c.validate().map_err(|e| format!("sweep point {label}: {e}"))?;
        }
        Ok(())
    }

    fn points(&self) -> Vec<(String, SimConfig)> {
        match &self.sweep {
            Some(axis) => axis.points(&self.base),
            None => vec![("base".to_string(), self.base.clone())],
        }
    }

    fn axis_name(&self) -> &'static str {
        self.sweep.as_ref().map_or("none", SweepAxis::name)
    }
}

/// SRP-S is defined for the shared mechanism only; every other algorithm
/// keeps the configured mechanism.
pub fn config_for(base: &SimConfig, algorithm: Algorithm) -> SimConfig {
    let mut c = base.clone();
    c.placement.algorithm = algorithm;
    if algorithm == Algorithm::SrpS {
        c.placement.mechanism = Mechanism::Shared;
    }
    c
}

pub fn runs_csv(cfg: &SimConfig, batch: &BatchResult) -> String {
    let mut out = format!("{RUNS_HEADER}\n");
    for (rep, r) in batch.runs.iter().enumerate() {
        let h = r.reliability_histogram;
        out.push_str(&format!(
            "{rep},{},{},{:.6},{},{},{},{},{},{}\n",
            cfg.repetition_seed(rep),
            r.total_failures(),
            r.mean_bandwidth(),
            r.placements_succeeded,
            r.placements_rejected,
            h[0],
            h[1],
            h[2],
            h[3]
        ));
    }
    out
}

pub fn summary_row(axis: &str, value: &str, algorithm: Algorithm, batch: &BatchResult) -> String {
    format!(
        "{axis},{value},{algorithm},{:.6},{:.6},{:.6}",
        batch.mean_total_failures(),
        batch.mean_bandwidth(),
        batch.success_rate()
    )
}

fn file_stem(value: &str, algorithm: Algorithm) -> String {
    format!("{value}_{algorithm}").replace(['/', ' '], "-")
}

/// Runs every sweep point for every algorithm. Each finished batch is
/// written before the next starts, so an interrupted sweep keeps its
/// results.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: &Path) -> io::Result<Vec<String>> {
    fs::create_dir_all(out_dir.join("runs"))?;
    let mut summary = File::create(out_dir.join("summary.csv"))?;
    writeln!(summary, "{SUMMARY_HEADER}")?;
    let mut rows = Vec::new();
    for (label, point) in spec.points() {
        for &algorithm in &spec.algorithms {
            let cfg = config_for(&point, algorithm);
            let batch = run_batch(&cfg).map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
            let stem = file_stem(&label, algorithm);
            fs::write(out_dir.join("runs").join(format!("{stem}.csv")), runs_csv(&cfg, &batch))?;
            fs::write(out_dir.join("runs").join(format!("{stem}_series.csv")), batch.to_csv())?;
            let row = summary_row(spec.axis_name(), &label, algorithm, &batch);
            writeln!(summary, "{row}")?;
            summary.flush()?;
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Human-readable histogram line.
pub fn histogram_line(batch: &BatchResult) -> String {
    HISTOGRAM_LABELS
        .iter()
        .zip(batch.mean_histogram())
        .map(|(l, v)| format!("{l}: {v:.2}"))
        .collect::<Vec<_>>()
        .join("  ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_is_a_single_key_object() {
        let spec: ExperimentSpec =
            serde_json::from_str(r#"{"sweep": {"edge_prob": [0.1, 0.2]}, "algorithms": ["SRP", "Grd-B"]}"#).unwrap();
        assert_eq!(spec.sweep, Some(SweepAxis::EdgeProb(vec![0.1, 0.2])));
        assert_eq!(spec.points().len(), 2);
        assert!(serde_json::from_str::<ExperimentSpec>(
            r#"{"sweep": {"edge_prob": [0.1], "node_count": [30]}, "algorithms": ["SRP"]}"#
        )
        .is_err());
    }

    #[test]
    fn empty_algorithm_list_is_rejected() {
        let spec: ExperimentSpec = serde_json::from_str(r#"{"algorithms": []}"#).unwrap();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn points_apply_their_value() {
        let spec: ExperimentSpec =
            serde_json::from_str(r#"{"sweep": {"backup_mode": ["full", "random", {"fixed": 2}]}, "algorithms": ["DAIP"]}"#)
                .unwrap();
        let pts = spec.points();
        assert_eq!(pts[2].0, "fixed-2");
        assert_eq!(pts[2].1.workload.backup_mode, BackupMode::Fixed(2));
        let bw: ExperimentSpec =
            serde_json::from_str(r#"{"sweep": {"bw_multiplier": [10]}, "algorithms": ["DAIP"]}"#).unwrap();
        assert_eq!(bw.points()[0].1.workload.bw_scale, 10.0);
    }

    #[test]
    fn srp_s_always_shares() {
        let c = config_for(&SimConfig::default(), Algorithm::SrpS);
        assert_eq!(c.placement.mechanism, Mechanism::Shared);
        let c = config_for(&SimConfig::default(), Algorithm::Srp);
        assert_eq!(c.placement.mechanism, Mechanism::FullyProtected);
    }
}
