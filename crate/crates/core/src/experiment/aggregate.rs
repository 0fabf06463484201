use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{ExperimentError, Result};
use crate::eval::RetrievalReport;
use crate::mappers::Method;

pub const TABLE_HEADER: [&str; 4] = ["model", "mapping", "mrr", "mate_rate"];
pub const SWEEP_HEADER: [&str; 4] = ["method", "dim", "mrr", "mate_rate"];

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub model: String,
    pub method: Method,
    pub mrr: f64,
    pub mate_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AggregateTable {
    pub rows: Vec<TableRow>,
}

/// Mean metrics of one method at one sweep value. Methods without a
/// dimension carry their overall mean at every swept dimension, or a single
/// point with `dim = None` when nothing is swept.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub method: Method,
    pub dim: Option<usize>,
    pub mrr: f64,
    pub mate_rate: f64,
}

#[derive(Default)]
struct Mean {
    mrr: Vec<f64>,
    rate: Vec<f64>,
}

impl Mean {
    fn push(&mut self, r: &RetrievalReport) {
        self.mrr.push(r.mean_reciprocal_rank);
        self.rate.push(r.mate_retrieval_rate);
    }

    fn finish(&self) -> (f64, f64) {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        (mean(&self.mrr), mean(&self.rate))
    }
}

type ReportKey<'a> = (&'a str, &'a str, &'a str, Method, Option<usize>);

fn key(r: &RetrievalReport) -> ReportKey<'_> {
    (&r.model, &r.pair.0, &r.pair.1, r.method, r.dim)
}

/// Unweighted means per (model, method) and per (method, dim). Reports are
/// folded in a canonical order, so any permutation of the input gives the
/// same bits.
pub fn aggregate(reports: &[RetrievalReport]) -> Result<(AggregateTable, Vec<SweepPoint>)> {
    if reports.is_empty() {
        return Err(ExperimentError::NoReports);
    }
    let mut sorted: Vec<&RetrievalReport> = reports.iter().collect();
    sorted.sort_by(|a, b| {
        key(a)
            .cmp(&key(b))
            .then(a.mean_reciprocal_rank.total_cmp(&b.mean_reciprocal_rank))
            .then(a.mate_retrieval_rate.total_cmp(&b.mate_retrieval_rate))
    });

    let mut by_model: BTreeMap<(&str, Method), Mean> = BTreeMap::new();
    let mut by_dim: BTreeMap<(Method, Option<usize>), Mean> = BTreeMap::new();
    let mut flat: BTreeMap<Method, Mean> = BTreeMap::new();
    let mut swept_dims = BTreeSet::new();
    for r in &sorted {
        by_model.entry((&r.model, r.method)).or_default().push(r);
        match r.dim {
            Some(d) => {
                swept_dims.insert(d);
                by_dim.entry((r.method, Some(d))).or_default().push(r);
            }
            None => flat.entry(r.method).or_default().push(r),
        }
    }

    let rows = by_model
        .into_iter()
        .map(|((model, method), m)| {
            let (mrr, mate_rate) = m.finish();
            TableRow {
                model: model.to_string(),
                method,
                mrr,
                mate_rate,
            }
        })
        .collect();

    let mut series: Vec<SweepPoint> = by_dim
        .into_iter()
        .map(|((method, dim), m)| {
            let (mrr, mate_rate) = m.finish();
            SweepPoint {
                method,
                dim,
                mrr,
                mate_rate,
            }
        })
        .collect();
    for (method, m) in flat {
        let (mrr, mate_rate) = m.finish();
        let dims: Vec<Option<usize>> = if swept_dims.is_empty() {
            vec![None]
        } else {
            swept_dims.iter().map(|&d| Some(d)).collect()
        };
        series.extend(dims.into_iter().map(|dim| SweepPoint {
            method,
            dim,
            mrr,
            mate_rate,
        }));
    }
    series.sort_by_key(|p| (p.method, p.dim));
    Ok((AggregateTable { rows }, series))
}

fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

fn csv_bytes<I, R>(header: [&str; 4], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let to_err = |e: csv::Error| ExperimentError::Io {
        path: "<csv>".into(),
        source: std::io::Error::other(e),
    };
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(row).map_err(to_err)?;
    }
    w.into_inner().map_err(|e| ExperimentError::Io {
        path: "<csv>".into(),
        source: std::io::Error::other(e.to_string()),
    })
}

/// Writes `table.csv`, `sweep.csv` and `report.jsonl` into `dir`. Output
/// bytes depend only on the arguments.
pub fn emit_outputs(
    table: &AggregateTable,
    series: &[SweepPoint],
    reports: &[RetrievalReport],
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| ExperimentError::io(dir, e))?;

    let table_csv = csv_bytes(
        TABLE_HEADER,
        table
            .rows
            .iter()
            .map(|r| vec![r.model.clone(), r.method.to_string(), fmt6(r.mrr), fmt6(r.mate_rate)]),
    )?;
    let sweep_csv = csv_bytes(
        SWEEP_HEADER,
        series.iter().map(|p| {
            vec![
                p.method.to_string(),
                p.dim.map(|d| d.to_string()).unwrap_or_default(),
                fmt6(p.mrr),
                fmt6(p.mate_rate),
            ]
        }),
    )?;
    for (name, bytes) in [("table.csv", table_csv), ("sweep.csv", sweep_csv)] {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| ExperimentError::io(&path, e))?;
    }

    let path = dir.join("report.jsonl");
    let file = File::create(&path).map_err(|e| ExperimentError::io(&path, e))?;
    let mut out = BufWriter::new(file);
    for r in reports {
        let line = serde_json::to_string(r).expect("report serializes");
        writeln!(out, "{line}").map_err(|e| ExperimentError::io(&path, e))?;
    }
    out.flush().map_err(|e| ExperimentError::io(&path, e))
}
