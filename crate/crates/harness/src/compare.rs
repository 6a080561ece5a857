//! Column-wise differences between two metrics CSVs.

use serde::Serialize;

use crate::error::{HarnessError, Result};
use crate::metrics::MetricsTable;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnDelta {
    pub column: String,
    pub final_a: Option<f64>,
    pub final_b: Option<f64>,
    /// `final_b - final_a`.
    pub final_delta: Option<f64>,
    /// Largest `|b - a|` over steps present in both files.
    pub max_abs_delta: f64,
}

/// Compares `b` against `a` on the steps both files logged.
pub fn compare(a: &MetricsTable, b: &MetricsTable) -> Result<Vec<ColumnDelta>> {
    if a.columns != b.columns {
        return Err(HarnessError::format(
            &b.path,
            "column layout differs from the first file",
        ));
    }
    let steps_a = a
        .column("step")
        .ok_or_else(|| HarnessError::format(&a.path, "no step column"))?;
    let steps_b = b
        .column("step")
        .ok_or_else(|| HarnessError::format(&b.path, "no step column"))?;
    let pairs: Vec<(usize, usize)> = steps_a
        .iter()
        .enumerate()
        .filter_map(|(i, s)| steps_b.iter().position(|t| t == s).map(|j| (i, j)))
        .collect();

    Ok(a.columns
        .iter()
        .enumerate()
        .filter(|(_, name)| name.as_str() != "step")
        .map(|(k, name)| {
            let final_a = a.last(name);
            let final_b = b.last(name);
            let max_abs_delta = pairs
                .iter()
                .filter_map(|&(i, j)| Some((b.rows[j][k]? - a.rows[i][k]?).abs()))
                .fold(0.0, f64::max);
            ColumnDelta {
                column: name.clone(),
                final_a,
                final_b,
                final_delta: final_a.zip(final_b).map(|(x, y)| y - x),
                max_abs_delta,
            }
        })
        .collect())
}
