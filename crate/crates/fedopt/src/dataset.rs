//! Labeled feature CSV: header `label,f0,f1,...`, one example per row.
//! Features are stored sparsely; zero cells are dropped on load.

use std::io::{Read, Write};
use std::path::Path;

use fedopt_core::tasks::SparseExample;

use crate::error::{AppError, AppResult};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPool {
    pub examples: Vec<SparseExample>,
    pub vocab: usize,
    pub classes: usize,
}

impl LabeledPool {
    pub fn labels(&self) -> Vec<usize> {
        self.examples.iter().map(|e| e.label).collect()
    }
}

pub fn read_dataset<R: Read>(input: R, name: &str) -> AppResult<LabeledPool> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers().map_err(|e| AppError::format(name, e))?.clone();
    if header.get(0) != Some("label") {
        return Err(AppError::format(name, "first column must be `label`"));
    }
    for (j, h) in header.iter().skip(1).enumerate() {
        if h != format!("f{j}") {
            return Err(AppError::format(name, format!("column {} must be `f{j}`, found `{h}`", j + 1)));
        }
    }
    let vocab = header.len() - 1;
    if vocab == 0 {
        return Err(AppError::format(name, "no feature columns"));
    }
    let mut examples = Vec::new();
    for (row_no, row) in rd.records().enumerate() {
        let row = row.map_err(|e| AppError::format(name, e))?;
        let at = |col: &str| format!("{name} row {}: {col}", row_no + 1);
        let label: usize = row[0].trim().parse().map_err(|e| AppError::format(at("label"), e))?;
        let mut features = Vec::new();
        for j in 0..vocab {
            let v: f64 = row[j + 1].trim().parse().map_err(|e| AppError::format(at(&format!("f{j}")), e))?;
            if !v.is_finite() {
                return Err(AppError::format(at(&format!("f{j}")), "non-finite feature"));
            }
            if v != 0.0 {
                features.push((j, v));
            }
        }
        examples.push(SparseExample { label, features });
    }
    if examples.is_empty() {
        return Err(AppError::format(name, "no examples"));
    }
    let classes = examples.iter().map(|e| e.label).max().unwrap_or(0) + 1;
    if classes < 2 {
        return Err(AppError::format(name, "need at least two distinct label values"));
    }
    Ok(LabeledPool { examples, vocab, classes })
}

pub fn load_dataset(path: &Path) -> AppResult<LabeledPool> {
    let f = std::fs::File::open(path).map_err(|e| AppError::io(path, e))?;
    read_dataset(f, &path.display().to_string())
}

/// Dense export of `pool`, the inverse of [`read_dataset`].
pub fn write_dataset<W: Write>(pool: &LabeledPool, out: W) -> AppResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| AppError::format("dataset", e);
    let mut header = vec!["label".to_string()];
    header.extend((0..pool.vocab).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(err)?;
    for ex in &pool.examples {
        let mut dense = vec![0.0; pool.vocab];
        for &(j, v) in &ex.features {
            dense[j] = v;
        }
        let mut row = vec![ex.label.to_string()];
        row.extend(dense.iter().map(|v| format!("{v}")));
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| AppError::format("dataset", e))
}
