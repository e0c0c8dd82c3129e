mod experiment;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msplace::placement::{Algorithm, Mechanism};
use msplace::simulator::{run_batch, FailureMode, Scenario, SimConfig};
use msplace::validation::{run_all, ValidationPlan};
use msplace::workload::BackupMode;

use experiment::{config_for, histogram_line, run_experiment, runs_csv, summary_row, ExperimentSpec, SUMMARY_HEADER};

/// Directory for artifacts when no `--output` flag is given.
const OUTPUT_ENV: &str = "MSPLACE_OUTPUT_DIR";
const DEFAULT_OUTPUT: &str = "msplace-output";

#[derive(Parser)]
#[command(name = "msplace", version, about = "Reliability-aware microservice placement simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run repetitions of one configuration and one algorithm.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run an experiment specification: one sweep axis, several algorithms.
    Sweep {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        repetitions: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the model self-check suites.
    Validate {
        /// Smaller suite sizes for a fast smoke check.
        #[arg(long)]
        quick: bool,
        /// Scale every instance reliability by `1 - bias` in the analytic model.
        #[arg(long, default_value_t = 0.0)]
        bias: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the topology a configuration generates as JSON.
    GenTopology {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the request stream a configuration generates as JSON.
    GenWorkload {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A JSON configuration file plus flags that override its fields.
#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    edge_prob: Option<f64>,
    #[arg(long)]
    access_fraction: Option<f64>,
    #[arg(long)]
    requests: Option<usize>,
    #[arg(long)]
    arrival_rate: Option<f64>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<u32>,
    /// SRP, SRP-S, DAIP, RRSP, Grd or Grd-B.
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// fully-protected or shared.
    #[arg(long, value_parser = parse_mechanism)]
    mechanism: Option<Mechanism>,
    #[arg(long)]
    cpu_multiplier: Option<f64>,
    #[arg(long)]
    bw_multiplier: Option<f64>,
    #[arg(long)]
    shared_ratio: Option<f64>,
    /// full, random, or a fixed backup count.
    #[arg(long, value_parser = parse_backup_mode)]
    backup_mode: Option<BackupMode>,
    /// remove or count-and-continue.
    #[arg(long, value_parser = parse_failure_mode)]
    failure_mode: Option<FailureMode>,
}

fn parse_mechanism(s: &str) -> Result<Mechanism, String> {
    match s {
        "fully-protected" | "fully_protected" => Ok(Mechanism::FullyProtected),
        "shared" => Ok(Mechanism::Shared),
        _ => Err(format!("unknown mechanism `{s}`")),
    }
}

fn parse_backup_mode(s: &str) -> Result<BackupMode, String> {
    match s {
        "full" => Ok(BackupMode::Full),
        "random" => Ok(BackupMode::Random),
        n => n.parse().map(BackupMode::Fixed).map_err(|_| format!("unknown backup mode `{s}`")),
    }
}

fn parse_failure_mode(s: &str) -> Result<FailureMode, String> {
    match s {
        "remove" => Ok(FailureMode::Remove),
        "count-and-continue" | "count_and_continue" => Ok(FailureMode::CountAndContinue),
        _ => Err(format!("unknown failure mode `{s}`")),
    }
}

/// Failures mapped to exit codes: 1 for configuration and I/O, 2 for a
/// failed validation suite.
enum Failure {
    Config(String),
    Suite,
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

impl SimArgs {
    fn resolve(&self) -> Result<SimConfig, Failure> {
        let mut c: SimConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => SimConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($field:ident).+) => {
                if let Some(v) = self.$flag {
                    c.$($field).+ = v;
                }
            };
        }
        set!(nodes => node_count);
        set!(edge_prob => edge_prob);
        set!(access_fraction => access_fraction);
        set!(requests => request_count);
        set!(arrival_rate => arrival_rate);
        set!(repetitions => repetitions);
        set!(seed => seed);
        set!(algorithm => placement.algorithm);
        set!(mechanism => placement.mechanism);
        set!(cpu_multiplier => workload.cpu_scale);
        set!(bw_multiplier => workload.bw_scale);
        set!(shared_ratio => shared_ratio);
        set!(backup_mode => workload.backup_mode);
        set!(failure_mode => failure_mode);
        if self.horizon.is_some() {
            c.horizon = self.horizon;
        }
        c.validate().map_err(|e| Failure::Config(e.to_string()))?;
        Ok(c)
    }
}

fn output_dir(flag: Option<PathBuf>, from_spec: Option<PathBuf>) -> PathBuf {
    flag.or(from_spec)
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
}

fn write_or_print(out: Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => Ok(fs::write(p, text)?),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn simulate(sim: &SimArgs, output: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = sim.resolve()?;
    let cfg = config_for(&cfg, cfg.placement.algorithm);
    let dir = output_dir(output, None);
    fs::create_dir_all(&dir)?;
    let batch = run_batch(&cfg).map_err(|e| Failure::Config(e.to_string()))?;
    fs::write(dir.join("runs.csv"), runs_csv(&cfg, &batch))?;
    fs::write(dir.join("series.csv"), batch.to_csv())?;
    let summary = format!(
        "{SUMMARY_HEADER}\n{}\n",
        summary_row("none", "base", cfg.placement.algorithm, &batch)
    );
    fs::write(dir.join("summary.csv"), &summary)?;
    print!("{summary}");
    println!("reliability histogram (mean placements): {}", histogram_line(&batch));
    Ok(())
}

fn sweep(spec: &Path, output: Option<PathBuf>, repetitions: Option<usize>, seed: Option<u64>) -> Result<(), Failure> {
    let mut spec: ExperimentSpec = read_json(spec)?;
    if let Some(r) = repetitions {
        spec.base.repetitions = r;
    }
    if let Some(s) = seed {
        spec.base.seed = s;
    }
    spec.validate().map_err(Failure::Config)?;
    let dir = output_dir(output, spec.output_dir.clone());
    let rows = run_experiment(&spec, &dir)?;
    println!("{SUMMARY_HEADER}");
    for r in rows {
        println!("{r}");
    }
    Ok(())
}

fn validate(quick: bool, bias: f64, seed: Option<u64>) -> Result<(), Failure> {
    if !(0.0..1.0).contains(&bias) {
        return Err(Failure::Config("bias must lie in [0, 1)".to_string()));
    }
    let mut plan = if quick {
        ValidationPlan {
            triples: 10_000,
            graphs: 40,
            fixtures: 20,
            samples: 20_000,
            placements: 500,
            monotonicity_cases: 100,
            ..Default::default()
        }
    } else {
        ValidationPlan::default()
    };
    plan.bias = bias;
    if let Some(s) = seed {
        plan.seed = s;
    }
    let mut ok = true;
    for r in run_all(&plan) {
        ok &= r.passed;
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {:<24} measured={:<12.4e} {}", r.name, r.measured, r.detail);
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Suite)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { sim, output } => simulate(&sim, output),
        Command::Sweep {
            spec,
            output,
            repetitions,
            seed,
        } => sweep(&spec, output, repetitions, seed),
        Command::Validate { quick, bias, seed } => validate(quick, bias, seed),
        Command::GenTopology { sim, out } => {
            let s = Scenario::generate(&sim.resolve()?).map_err(|e| Failure::Config(e.to_string()))?;
            write_or_print(out, &s.net.to_json())
        }
        Command::GenWorkload { sim, out } => {
            let s = Scenario::generate(&sim.resolve()?).map_err(|e| Failure::Config(e.to_string()))?;
            let text = serde_json::to_string_pretty(&s.requests).map_err(|e| Failure::Config(e.to_string()))?;
            write_or_print(out, &text)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Suite) => {
            eprintln!("validation failed");
            ExitCode::from(2)
        }
    }
}
