use std::fs::{File, OpenOptions};
use std::path::Path;

use crate::error::{QsiError, Result};

/// Metric after one iteration of one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rep: usize,
    pub iter: usize,
    pub strategy: String,
    pub problem: String,
    /// Selected `x`; empty for the initial-design record.
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub z: Option<f64>,
    pub misclass_prop: f64,
    pub wall_ms: u64,
}

pub fn record_header(x_dim: usize, s_dim: usize) -> Vec<String> {
    let mut h: Vec<String> = ["rep", "iter", "strategy", "problem"].iter().map(|s| s.to_string()).collect();
    h.extend((1..=x_dim).map(|i| format!("x{i}")));
    h.extend((1..=s_dim).map(|i| format!("s{i}")));
    h.extend(["z", "misclass_prop", "wall_ms"].iter().map(|s| s.to_string()));
    h
}

fn record_row(r: &RunRecord, x_dim: usize, s_dim: usize) -> Vec<String> {
    let mut row = vec![r.rep.to_string(), r.iter.to_string(), r.strategy.clone(), r.problem.clone()];
    let coords = |v: &[f64], d: usize| -> Vec<String> {
        if v.is_empty() {
            vec![String::new(); d]
        } else {
            v.iter().map(|t| t.to_string()).collect()
        }
    };
    row.extend(coords(&r.x, x_dim));
    row.extend(coords(&r.s, s_dim));
    row.push(r.z.map(|z| z.to_string()).unwrap_or_default());
    row.push(r.misclass_prop.to_string());
    row.push(r.wall_ms.to_string());
    row
}

fn csv_error(e: csv::Error) -> QsiError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => QsiError::Io(io),
        other => QsiError::InvalidArgument(format!("malformed CSV: {other:?}")),
    }
}

/// Writes `records` with a header; an empty list gives a header-only file.
pub fn write_records(records: &[RunRecord], x_dim: usize, s_dim: usize, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(record_header(x_dim, s_dim)).map_err(csv_error)?;
    for r in records {
        w.write_record(record_row(r, x_dim, s_dim)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Appends one record to an existing file written by [`write_records`].
pub fn append_record(record: &RunRecord, x_dim: usize, s_dim: usize, path: &Path) -> Result<()> {
    let file = OpenOptions::new().append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(record_row(record, x_dim, s_dim)).map_err(csv_error)?;
    w.flush()?;
    Ok(())
}

/// Reads a record file, returning the records and the `x` and `s` dimensions.
pub fn read_records(path: &Path) -> Result<(Vec<RunRecord>, usize, usize)> {
    let mut r = csv::Reader::from_reader(File::open(path)?);
    let header = r.headers().map_err(csv_error)?.clone();
    let x_dim = header.iter().filter(|h| h.starts_with('x')).count();
    let s_dim = header.iter().filter(|h| h.starts_with('s') && *h != "strategy").count();
    if header.len() != 7 + x_dim + s_dim {
        return Err(QsiError::InvalidArgument(format!("unexpected header in {}", path.display())));
    }
    let bad = |what: &str| QsiError::InvalidArgument(format!("{}: bad {what}", path.display()));
    let mut out = Vec::new();
    for row in r.records() {
        let row = row.map_err(csv_error)?;
        let num = |i: usize| -> Result<Option<f64>> {
            let t = &row[i];
            if t.is_empty() {
                Ok(None)
            } else {
                t.parse().map(Some).map_err(|_| bad("number"))
            }
        };
        let coords = |start: usize, d: usize| -> Result<Vec<f64>> {
            let v: Vec<Option<f64>> = (start..start + d).map(num).collect::<Result<_>>()?;
            Ok(v.into_iter().flatten().collect())
        };
        let base = 4 + x_dim + s_dim;
        out.push(RunRecord {
            rep: row[0].parse().map_err(|_| bad("rep"))?,
            iter: row[1].parse().map_err(|_| bad("iter"))?,
            strategy: row[2].to_string(),
            problem: row[3].to_string(),
            x: coords(4, x_dim)?,
            s: coords(4 + x_dim, s_dim)?,
            z: num(base)?,
            misclass_prop: num(base + 1)?.ok_or_else(|| bad("misclass_prop"))?,
            wall_ms: row[base + 2].parse().map_err(|_| bad("wall_ms"))?,
        });
    }
    Ok((out, x_dim, s_dim))
}

/// Nearest-rank quantile of sorted data: the value of rank `⌈q·n⌉`.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Across-repetition statistics of the metric at one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub iter: usize,
    pub n: usize,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
}

pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut by_iter: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for r in records {
        by_iter.entry(r.iter).or_default().push(r.misclass_prop);
    }
    by_iter
        .into_iter()
        .map(|(iter, mut v)| {
            v.sort_by(f64::total_cmp);
            SummaryRow {
                iter,
                n: v.len(),
                median: nearest_rank(&v, 0.5),
                q75: nearest_rank(&v, 0.75),
                q95: nearest_rank(&v, 0.95),
            }
        })
        .collect()
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["iter", "n", "median", "q75", "q95"]).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            r.n.to_string(),
            r.median.to_string(),
            r.q75.to_string(),
            r.q95.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
