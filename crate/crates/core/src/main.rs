use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use bmc_kdetect::estimators::{BuiltinEstimator, Estimator, EstimatorKind, Thresholds};
use bmc_kdetect::harness::{
    aggregate, run_scenario, sample_replication, suite, write_csv, write_jsonl, write_pivot,
    write_summary, OutputFormat, Scenario, SequentialRule,
};
use bmc_kdetect::metrics::{compare, read_labels, Partition};
use bmc_kdetect::model::{Trajectory, TrajectoryFormat};

#[derive(Parser)]
#[command(name = "bmc-kdetect", version, about = "Cluster-count estimation for block Markov chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory of a scenario.
    Sample {
        #[arg(long)]
        config: PathBuf,
        /// `.txt` writes one state per line, anything else the binary format.
        #[arg(long)]
        out: PathBuf,
        /// Also write the true cluster of every state.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Replication index, selecting the child seed.
        #[arg(long, default_value_t = 0)]
        replication: usize,
    },
    /// Run one estimator on a trajectory and print the result as JSON.
    Estimate {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long, default_value = "alg2")]
        estimator: String,
        #[arg(long, default_value_t = 0.9)]
        a: f64,
        #[arg(long, default_value_t = 0.1)]
        b: f64,
        #[arg(long, default_value_t = 0.75)]
        c: f64,
        /// Embedding rank for alg2.
        #[arg(long)]
        r: Option<usize>,
        #[arg(long, default_value_t = 10)]
        k_max: usize,
        /// State count for text trajectories (default: largest index + 1).
        #[arg(long)]
        n: Option<usize>,
        /// Write the completed clustering of alg2.
        #[arg(long)]
        labels_out: Option<PathBuf>,
    },
    /// Run scenarios and write one row per replication and estimator.
    Experiment {
        /// A scenario or a list of scenarios in JSON.
        #[arg(long, required_unless_present = "suite", conflicts_with = "suite")]
        config: Option<PathBuf>,
        /// Built-in scenario family instead of a config file.
        #[arg(long)]
        suite: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        /// Sample until the margin of error of the mean K̂ is at most 0.15,
        /// with at least 250 replications.
        #[arg(long)]
        sequential: bool,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        root_seed: Option<u64>,
        /// Per-cell mean, sd and margin of error.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Scenario × estimator grid of mean and sd.
        #[arg(long)]
        pivot: Option<PathBuf>,
    },
    /// Compare two label files and print the metrics as JSON.
    Metrics {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        est: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

/// Exit status 2 for configuration and IO problems, 3 for numerical failures.
enum Failure {
    Config(String),
    Numerical(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Config(e.to_string())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn load_scenarios(path: &Path) -> Result<Vec<Scenario>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(Scenario::parse_many(&text)?)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_labels(path: &Path, labels: &[usize]) -> Result<(), Failure> {
    let mut w = create(path)?;
    for l in labels {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

fn sample(config: &Path, out: &Path, labels: Option<&Path>, replication: usize) -> Result<(), Failure> {
    let scenario = load_scenarios(config)?
        .into_iter()
        .next()
        .ok_or_else(|| Failure::Config("empty scenario list".into()))?;
    let (instance, traj) = sample_replication(&scenario, replication)?;
    let mut w = create(out)?;
    match TrajectoryFormat::from_path(out) {
        TrajectoryFormat::Text => traj.write_text(&mut w)?,
        TrajectoryFormat::Binary => traj.write_binary(&mut w)?,
    }
    w.flush()?;
    if let Some(path) = labels {
        write_labels(path, &instance.sigma)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    estimator: &'a str,
    n: usize,
    ell: usize,
    k_hat: usize,
    k_spec: Option<usize>,
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    traj_path: &Path,
    id: &str,
    thresholds: Thresholds,
    r: Option<usize>,
    k_max: usize,
    n: Option<usize>,
    labels_out: Option<&Path>,
) -> Result<(), Failure> {
    let kind = EstimatorKind::from_id(id)?;
    let input = open(traj_path)?;
    let traj = match TrajectoryFormat::from_path(traj_path) {
        TrajectoryFormat::Text => Trajectory::read_text(input, n)?,
        TrajectoryFormat::Binary => Trajectory::read_binary(input)?,
    };
    let est = BuiltinEstimator {
        kind,
        thresholds,
        k_max,
        r_override: r,
        compute_labels: labels_out.is_some(),
    };
    let out = est.estimate(&traj).map_err(|e| {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    })?;
    if let Some(path) = labels_out {
        let labels = out
            .labels
            .as_ref()
            .ok_or_else(|| Failure::Config(format!("{id} produced no clustering")))?;
        write_labels(path, labels)?;
    }
    print_json(&EstimateReport {
        estimator: kind.as_str(),
        n: traj.n,
        ell: traj.ell,
        k_hat: out.k_hat,
        k_spec: out.k_spec,
    })
}

#[allow(clippy::too_many_arguments)]
fn experiment(
    config: Option<&Path>,
    suite_name: Option<&str>,
    out: &Path,
    format: FormatArg,
    sequential: bool,
    replications: Option<usize>,
    root_seed: Option<u64>,
    summary: Option<&Path>,
    pivot: Option<&Path>,
) -> Result<(), Failure> {
    let mut scenarios = match (config, suite_name) {
        (Some(path), _) => load_scenarios(path)?,
        (None, Some(name)) => suite(name)?,
        (None, None) => return Err(Failure::Config("need --config or --suite".into())),
    };
    for s in &mut scenarios {
        if let Some(r) = replications {
            s.replications = r;
        }
        if let Some(seed) = root_seed {
            s.root_seed = seed;
        }
        if sequential && s.sequential.is_none() {
            s.sequential = Some(SequentialRule::default());
        }
    }
    let mut rows = Vec::new();
    for s in &scenarios {
        rows.extend(run_scenario(s)?);
    }
    let format = match format {
        FormatArg::Csv => OutputFormat::Csv,
        FormatArg::Jsonl => OutputFormat::Jsonl,
    };
    let w = create(out)?;
    match format {
        OutputFormat::Csv => write_csv(&rows, w)?,
        OutputFormat::Jsonl => write_jsonl(&rows, w)?,
    }
    let cells = aggregate(&rows);
    if let Some(path) = summary {
        write_summary(&cells, create(path)?)?;
    }
    if let Some(path) = pivot {
        write_pivot(&cells, create(path)?)?;
    }
    Ok(())
}

fn metrics(truth: &Path, est: &Path) -> Result<(), Failure> {
    let truth = Partition::from_labels(read_labels(open(truth)?)?)?;
    let est = Partition::from_labels(read_labels(open(est)?)?)?;
    print_json(&compare(&truth, &est)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Sample {
            config,
            out,
            labels,
            replication,
        } => sample(&config, &out, labels.as_deref(), replication),
        Command::Estimate {
            traj,
            estimator,
            a,
            b,
            c,
            r,
            k_max,
            n,
            labels_out,
        } => {
            let thresholds = Thresholds::new(a, b, c)?;
            estimate(&traj, &estimator, thresholds, r, k_max, n, labels_out.as_deref())
        }
        Command::Experiment {
            config,
            suite,
            out,
            format,
            sequential,
            replications,
            root_seed,
            summary,
            pivot,
        } => experiment(
            config.as_deref(),
            suite.as_deref(),
            &out,
            format,
            sequential,
            replications,
            root_seed,
            summary.as_deref(),
            pivot.as_deref(),
        ),
        Command::Metrics { truth, est } => metrics(&truth, &est),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
