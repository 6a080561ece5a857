//! Dataset exchange format: one CSV row per sample with columns
//! `x0, …, x{d-1}, label, domain` where `domain` is `source` or `target`.

use std::path::Path;

use tsc_core::autodiff::Tensor;
use tsc_core::data::Domain;

use crate::error::{HarnessError, Result};

pub fn write_dataset_csv(source: &Domain<f64>, target: &Domain<f64>, path: &Path) -> Result<()> {
    let err = |e: csv::Error| HarnessError::format(path, e);
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let dim = source.input_dim();
    let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    header.extend(["label".to_string(), "domain".to_string()]);
    w.write_record(&header).map_err(err)?;
    for (domain, tag) in [(source, "source"), (target, "target")] {
        for i in 0..domain.len() {
            let mut rec: Vec<String> = domain
                .features()
                .row(i)
                .iter()
                .map(f64::to_string)
                .collect();
            rec.push(domain.labels()[i].to_string());
            rec.push(tag.to_string());
            w.write_record(&rec).map_err(err)?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Reads a dataset CSV back into `(source, target)`.
///
/// The class count is one more than the largest label seen in either domain.
pub fn read_dataset_csv(path: &Path) -> Result<(Domain<f64>, Domain<f64>)> {
    let err = |e: csv::Error| HarnessError::format(path, e);
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let headers = r.headers().map_err(err)?.clone();
    let n = headers.len();
    if n < 3 || &headers[n - 2] != "label" || &headers[n - 1] != "domain" {
        return Err(HarnessError::format(
            path,
            "expected header `x0,…,label,domain`",
        ));
    }
    let dim = n - 2;
    let mut parts: [(Vec<f64>, Vec<usize>); 2] = Default::default();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(err)?;
        let bad = |what: &str| HarnessError::format(path, format!("row {}: bad {what}", i + 1));
        let slot = match &rec[n - 1] {
            "source" => 0,
            "target" => 1,
            _ => return Err(bad("domain")),
        };
        for field in rec.iter().take(dim) {
            parts[slot]
                .0
                .push(field.parse().map_err(|_| bad("feature"))?);
        }
        parts[slot]
            .1
            .push(rec[n - 2].parse().map_err(|_| bad("label"))?);
    }
    let classes = parts
        .iter()
        .flat_map(|p| p.1.iter())
        .max()
        .map_or(0, |m| m + 1);
    let [source, target] = parts;
    let build = |name: &str, (xs, ys): (Vec<f64>, Vec<usize>)| -> Result<Domain<f64>> {
        let rows = ys.len();
        let xs = Tensor::new(vec![rows, dim], xs)?;
        Ok(Domain::new(name, xs, ys, classes)?)
    };
    Ok((build("source", source)?, build("target", target)?))
}
