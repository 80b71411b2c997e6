//! Per-round metrics CSV.
//!
//! Reals are written with 17 significant digits so every value parses back
//! to the identical `f64`. Unevaluated metrics are empty cells and the
//! cohort is a `;`-separated id list.

use std::io::{Read, Write};
use std::path::Path;

use fedopt_core::fedloop::RoundRecord;

use crate::error::{AppError, AppResult};

pub const HEADER: [&str; 7] = ["round", "train_loss", "grad_norm_sq", "eval_metric", "clients", "floor_events", "wall_ms"];

/// Scientific notation with 17 significant digits.
pub fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn format_opt(v: Option<f64>) -> String {
    v.map(format_real).unwrap_or_default()
}

pub fn write_metrics<W: Write>(records: &[RoundRecord], out: W) -> AppResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| AppError::format("metrics", e);
    w.write_record(HEADER).map_err(err)?;
    for r in records {
        let clients = r.clients.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(";");
        w.write_record([
            r.round.to_string(),
            format_real(r.train_loss),
            format_opt(r.grad_norm_sq),
            format_opt(r.eval_metric),
            clients,
            r.floor_events.to_string(),
            r.wall_ms.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| AppError::format("metrics", e))?;
    Ok(())
}

pub fn write_metrics_file(records: &[RoundRecord], path: &Path) -> AppResult<()> {
    let f = std::fs::File::create(path).map_err(|e| AppError::io(path, e))?;
    write_metrics(records, std::io::BufWriter::new(f))
}

pub fn read_metrics<R: Read>(input: R) -> AppResult<Vec<RoundRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| AppError::format("metrics", e))?.clone();
    if header.iter().ne(HEADER) {
        return Err(AppError::format("metrics", format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut out = Vec::new();
    for (line, row) in rd.records().enumerate() {
        let row = row.map_err(|e| AppError::format("metrics", e))?;
        let at = |col: usize| format!("metrics row {}: {}", line + 1, HEADER[col]);
        let real = |col: usize| -> AppResult<f64> { row[col].parse().map_err(|e| AppError::format(at(col), e)) };
        let opt = |col: usize| -> AppResult<Option<f64>> {
            if row[col].is_empty() {
                Ok(None)
            } else {
                real(col).map(Some)
            }
        };
        let int = |col: usize| -> AppResult<u64> { row[col].parse().map_err(|e| AppError::format(at(col), e)) };
        let clients = if row[4].is_empty() {
            Vec::new()
        } else {
            row[4]
                .split(';')
                .map(|c| c.parse().map_err(|e| AppError::format(at(4), e)))
                .collect::<AppResult<Vec<usize>>>()?
        };
        out.push(RoundRecord {
            round: int(0)?,
            train_loss: real(1)?,
            grad_norm_sq: opt(2)?,
            eval_metric: opt(3)?,
            clients,
            floor_events: int(5)?,
            wall_ms: int(6)?,
        });
    }
    Ok(out)
}

pub fn read_metrics_file(path: &Path) -> AppResult<Vec<RoundRecord>> {
    let f = std::fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    read_metrics(f)
}
