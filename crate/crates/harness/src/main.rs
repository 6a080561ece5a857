use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tsc_core::config::ExperimentConfig;
use tsc_harness::compare::compare;
use tsc_harness::config::parse_config;
use tsc_harness::dataset_io::{read_dataset_csv, write_dataset_csv};
use tsc_harness::experiment::{run_experiment, sweep, AGGREGATE_FILE};
use tsc_harness::metrics::MetricsTable;

/// Teacher-student competition experiments.
#[derive(Debug, Parser)]
#[command(name = "tsc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one configuration and write metrics, summary and plot.
    Run {
        /// TOML config; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the run seed (init and sampling).
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Dataset CSV to train on instead of generating one.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run one configuration for several seeds in parallel.
    Sweep {
        /// TOML config; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Parent of the per-seed directories; overrides output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Dataset CSV shared by every seed.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Column-wise deltas between two metrics CSVs (second minus first).
    Compare { first: PathBuf, second: PathBuf },
    /// Write the configured dataset as CSV.
    GenData {
        /// TOML config; defaults are used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the dataset seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> anyhow::Result<ExperimentConfig> {
    let text = match path {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let origin = path.map_or("<defaults>".to_string(), |p| p.display().to_string());
    parse_config(&text).with_context(|| format!("in {origin}"))
}

fn load_data(
    path: Option<&Path>,
) -> anyhow::Result<Option<(tsc_core::Domain64, tsc_core::Domain64)>> {
    path.map(|p| read_dataset_csv(p).map_err(anyhow::Error::from))
        .transpose()
}

fn fmt_acc(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |v| format!("{v:.4}"))
}

fn execute(command: Command) -> anyhow::Result<String> {
    let mut out = String::new();
    match command {
        Command::Run {
            config,
            seed,
            output_dir,
            data,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let dir = output_dir.unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
            cfg.output_dir = dir.display().to_string();
            let data = load_data(data.as_deref())?;
            let result = run_experiment(&cfg, &dir, data.as_ref())?;
            writeln!(
                out,
                "final teacher accuracy: {:.4}",
                result.final_teacher_acc
            )?;
            writeln!(
                out,
                "final student accuracy: {}",
                fmt_acc(result.final_student_acc)
            )?;
            writeln!(out, "outputs: {}", dir.display())?;
        }
        Command::Sweep {
            config,
            seeds,
            output_dir,
            data,
        } => {
            let cfg = load_config(config.as_deref())?;
            let dir = output_dir.unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
            let data = load_data(data.as_deref())?;
            let agg = sweep(&cfg, &seeds, &dir, data.as_ref())?;
            for run in &agg.runs {
                writeln!(
                    out,
                    "seed {}: teacher {:.4} student {}",
                    run.seed,
                    run.summary.final_teacher_acc,
                    fmt_acc(run.summary.final_student_acc)
                )?;
            }
            for (name, stat) in &agg.metrics {
                writeln!(
                    out,
                    "{name}: median {:.4} min {:.4} max {:.4}",
                    stat.median, stat.min, stat.max
                )?;
            }
            writeln!(out, "aggregate: {}", dir.join(AGGREGATE_FILE).display())?;
        }
        Command::Compare { first, second } => {
            let a = MetricsTable::read(&first)?;
            let b = MetricsTable::read(&second)?;
            writeln!(
                out,
                "column,final_first,final_second,final_delta,max_abs_delta"
            )?;
            let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            for d in compare(&a, &b)? {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    d.column,
                    opt(d.final_a),
                    opt(d.final_b),
                    opt(d.final_delta),
                    d.max_abs_delta
                )?;
            }
        }
        Command::GenData {
            config,
            seed,
            out: path,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(seed) = seed {
                cfg.dataset.seed = seed;
            }
            let (source, target) = tsc_core::data::generate::<f64>(&cfg.dataset)?;
            write_dataset_csv(&source, &target, &path)?;
            writeln!(
                out,
                "wrote {} source and {} target samples to {}",
                source.len(),
                target.len(),
                path.display()
            )?;
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli.command) {
        Ok(report) => {
            // a closed pipe (e.g. `| head`) is not a failure
            match io::stdout().lock().write_all(report.as_bytes()) {
                Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
                    eprintln!("error: writing output: {e}");
                    ExitCode::from(1)
                }
                _ => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
