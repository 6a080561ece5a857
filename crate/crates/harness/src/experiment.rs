//! Single runs and parallel seed sweeps with their on-disk outputs.
//!
//! A run directory holds `config.toml` (every key, defaults included),
//! `metrics.csv`, `summary.json` and `curves.svg`. A sweep puts each run in
//! `seed-<n>/` and writes `aggregate.json` next to them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tsc_core::config::ExperimentConfig;
use tsc_core::data::Domain;
use tsc_core::trainer::{run_on, RunResult};
use tsc_core::RunResult64;

use crate::config::config_to_text;
use crate::error::{HarnessError, Result};
use crate::metrics::{write_metrics, MetricsTable, Summary, CSV_HEADER, METRICS_FILE};
use crate::plot::{emit_plots, PLOT_FILE};

pub const CONFIG_ECHO_FILE: &str = "config.toml";
pub const AGGREGATE_FILE: &str = "aggregate.json";

/// Runs one experiment and writes its outputs to `output_dir`.
///
/// With `data` the given domains replace the generated ones.
pub fn run_experiment(
    config: &ExperimentConfig,
    output_dir: &Path,
    data: Option<&(Domain<f64>, Domain<f64>)>,
) -> Result<RunResult64> {
    config.validate()?;
    let result: RunResult<f64> = match data {
        Some((source, target)) => run_on(config, source, target, |_, _| {})?,
        None => {
            let (source, target) = tsc_core::data::generate(&config.dataset)?;
            run_on(config, &source, &target, |_, _| {})?
        }
    };
    write_run_outputs(&result, output_dir)?;
    Ok(result)
}

pub fn write_run_outputs(result: &RunResult64, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let echo = ExperimentConfig {
        output_dir: dir.display().to_string(),
        ..result.config.clone()
    };
    let echo_path = dir.join(CONFIG_ECHO_FILE);
    fs::write(&echo_path, config_to_text(&echo)).map_err(|e| HarnessError::io(echo_path, e))?;
    write_metrics(result, dir)?;
    emit_plots(&result.history, &dir.join(PLOT_FILE))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stat {
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        };
        Some(Self {
            median,
            min: v[0],
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRun {
    pub seed: u64,
    pub dir: PathBuf,
    pub summary: Summary,
}

/// Final-row statistics over all runs of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub seeds: Vec<u64>,
    pub runs: Vec<SweepRun>,
    /// Median/min/max of each metric's final logged value.
    pub metrics: BTreeMap<String, Stat>,
}

/// Aggregates the final rows of the given metrics CSVs.
pub fn aggregate_tables(tables: &[MetricsTable]) -> BTreeMap<String, Stat> {
    CSV_HEADER
        .iter()
        .filter(|c| **c != "step")
        .filter_map(|c| {
            let finals: Vec<f64> = tables.iter().filter_map(|t| t.last(c)).collect();
            Stat::of(&finals).map(|s| (c.to_string(), s))
        })
        .collect()
}

/// Runs every seed in parallel, each into `output_dir/seed-<n>`, then
/// aggregates from the written CSVs.
pub fn sweep(
    config: &ExperimentConfig,
    seeds: &[u64],
    output_dir: &Path,
    data: Option<&(Domain<f64>, Domain<f64>)>,
) -> Result<Aggregate> {
    if seeds.is_empty() {
        return Err(HarnessError::Config("sweep needs at least one seed".into()));
    }
    let results: Vec<Result<SweepRun>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                scope.spawn(move || {
                    let dir = output_dir.join(format!("seed-{seed}"));
                    let cfg = ExperimentConfig {
                        seed,
                        output_dir: dir.display().to_string(),
                        ..config.clone()
                    };
                    let result = run_experiment(&cfg, &dir, data)?;
                    log::info!(
                        "seed {seed}: teacher {:.4} student {:?}",
                        result.final_teacher_acc,
                        result.final_student_acc
                    );
                    Ok(SweepRun {
                        seed,
                        summary: Summary::of(&result),
                        dir,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let tables = runs
        .iter()
        .map(|r| MetricsTable::read(&r.dir.join(METRICS_FILE)))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = Aggregate {
        seeds: seeds.to_vec(),
        metrics: aggregate_tables(&tables),
        runs,
    };
    let path = output_dir.join(AGGREGATE_FILE);
    let json = serde_json::to_string_pretty(&aggregate).expect("aggregate serialises");
    fs::write(&path, json + "\n").map_err(|e| HarnessError::io(path, e))?;
    Ok(aggregate)
}
