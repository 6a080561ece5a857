//! Metrics CSV and run summary JSON.
//!
//! The CSV has one row per evaluation with the columns in [`CSV_HEADER`].
//! Floats use Rust's shortest round-trip formatting, so the file is a pure
//! function of the history and parses back to identical values. Columns that
//! do not apply to a row (losses before the first step, student columns in
//! teacher-only runs) are left empty.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tsc_core::trainer::{MetricRow, RunResult};

use crate::config::config_hash;
use crate::error::{HarnessError, Result};

pub const CSV_HEADER: [&str; 12] = [
    "step",
    "threshold",
    "teacher_loss",
    "student_loss",
    "teacher_acc",
    "student_acc",
    "pl_teacher_acc",
    "pl_student_acc",
    "pl_winner_acc",
    "frac_teacher_over_threshold",
    "frac_teacher_higher_conf",
    "frac_student_wins",
];

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Values of one row in [`CSV_HEADER`] order.
pub fn row_values(r: &MetricRow) -> [Option<f64>; 12] {
    [
        Some(r.step as f64),
        Some(r.threshold),
        r.teacher_loss,
        r.student_loss,
        Some(r.teacher_acc),
        r.student_acc,
        Some(r.pl_teacher_acc),
        r.pl_student_acc,
        Some(r.pl_winner_acc),
        Some(r.frac_teacher_over_threshold),
        Some(r.frac_teacher_higher_conf),
        Some(r.frac_student_wins),
    ]
}

fn fmt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_metrics_csv(history: &[MetricRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::format(path, e))?;
    w.write_record(CSV_HEADER)
        .map_err(|e| HarnessError::format(path, e))?;
    for row in history {
        let mut fields: Vec<String> = row_values(row).iter().map(|&v| fmt(v)).collect();
        fields[0] = row.step.to_string();
        w.write_record(&fields)
            .map_err(|e| HarnessError::format(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub seed: u64,
    pub final_teacher_acc: f64,
    pub final_student_acc: Option<f64>,
    pub steps: usize,
    pub wallclock_s: f64,
}

impl Summary {
    pub fn of<T>(result: &RunResult<T>) -> Self {
        Self {
            config_hash: config_hash(&result.config),
            seed: result.config.seed,
            final_teacher_acc: result.final_teacher_acc,
            final_student_acc: result.final_student_acc,
            steps: result.history.last().map_or(0, |r| r.step),
            wallclock_s: result.wallclock_s,
        }
    }
}

/// Writes `metrics.csv` and `summary.json` into `dir`.
pub fn write_metrics<T>(result: &RunResult<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    write_metrics_csv(&result.history, &dir.join(METRICS_FILE))?;
    let summary_path = dir.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(&Summary::of(result)).expect("summary serialises");
    fs::write(&summary_path, json + "\n").map_err(|e| HarnessError::io(summary_path, e))
}

/// A metrics CSV read back as numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub path: PathBuf,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl MetricsTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| HarnessError::format(path, e))?;
        let columns: Vec<String> = r
            .headers()
            .map_err(|e| HarnessError::format(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, record) in r.records().enumerate() {
            let record = record.map_err(|e| HarnessError::format(path, e))?;
            let row = record
                .iter()
                .map(|field| {
                    if field.is_empty() {
                        Ok(None)
                    } else {
                        field.parse::<f64>().map(Some).map_err(|e| {
                            HarnessError::format(path, format!("row {}: `{field}`: {e}", i + 1))
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Ok(Self {
            path: path.to_path_buf(),
            columns,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| r.get(idx).copied().flatten())
                .collect(),
        )
    }

    pub fn last(&self, name: &str) -> Option<f64> {
        self.column(name)?.last().copied().flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tsc_core::competition::Schedule;
    use tsc_core::config::ExperimentConfig;
    use tsc_core::data::DatasetSpec;
    use tsc_core::trainer::run;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            total_steps: 30,
            eval_interval: 10,
            dataset: DatasetSpec {
                n_source: 50,
                n_target: 50,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn csv_round_trips_and_partitions() {
        let dir = tempfile::tempdir().unwrap();
        let result = run::<f64>(&tiny()).unwrap();
        write_metrics(&result, dir.path()).unwrap();
        let table = MetricsTable::read(&dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(table.columns, CSV_HEADER);
        assert_eq!(table.rows.len(), result.history.len());
        for (row, orig) in table.rows.iter().zip(&result.history) {
            assert_eq!(row.as_slice(), row_values(orig).as_slice());
            let sum: f64 = row[9..].iter().map(|v| v.unwrap()).sum();
            assert!((sum - 1.0).abs() < 1e-9);
            let step = row[0].unwrap();
            let expected = Schedule::new(10.0, 30)
                .unwrap()
                .threshold(step as usize)
                .unwrap();
            assert_eq!(row[1].unwrap(), expected);
            assert!((expected - 1.0 / (1.0 + (-10.0 * step / 30.0).exp())).abs() < 1e-15);
        }
        assert_eq!(table.rows[0][2], None);

        let summary: Summary =
            serde_json::from_str(&fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap())
                .unwrap();
        assert_eq!(summary.steps, 30);
        assert_eq!(summary.final_teacher_acc, result.final_teacher_acc);
        let keys: Vec<String> = serde_json::from_str::<serde_json::Value>(
            &fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap(),
        )
        .unwrap()
        .as_object()
        .unwrap()
        .keys()
        .cloned()
        .collect();
        let mut expected = vec![
            "config_hash",
            "final_student_acc",
            "final_teacher_acc",
            "seed",
            "steps",
            "wallclock_s",
        ];
        expected.sort_unstable();
        assert_eq!(keys, expected);
    }

    #[test]
    fn reruns_write_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        write_metrics_csv(&run::<f64>(&tiny()).unwrap().history, &a).unwrap();
        write_metrics_csv(&run::<f64>(&tiny()).unwrap().history, &b).unwrap();
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
    }

    #[test]
    fn unwritable_path_names_the_path() {
        let err = write_metrics_csv(&[], Path::new("/nonexistent-dir/x/metrics.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/x/metrics.csv"));
    }
}
