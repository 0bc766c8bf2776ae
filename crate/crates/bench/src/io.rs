//! Headerless CSV matrices (one row per line), weight vectors (one value
//! per line) and the JSON manifest that travels with them.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use spargw::{Distribution, MassMode, RelationMatrix};

use crate::error::{BenchError, Result};

fn parse_error(path: &Path, line: u64, column: u64, message: impl Into<String>) -> BenchError {
    BenchError::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

/// Reads any rectangular matrix of floats.
pub fn ingest_matrix(path: &Path) -> Result<Array2<f64>> {
    let file = File::open(path).map_err(|e| parse_error(path, 0, 0, format!("cannot open: {e}")))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, 0, e.to_string())
        })?;
        let line = record.position().map_or(rows as u64 + 1, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(parse_error(
                    path,
                    line,
                    0,
                    format!("expected {w} fields, found {}", record.len()),
                ));
            }
            Some(_) => {}
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_error(path, line, c as u64 + 1, format!("not a number: `{field}`")))?;
            values.push(v);
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| parse_error(path, 1, 0, "empty matrix file"))?;
    Ok(Array2::from_shape_vec((rows, width), values).expect("rectangular by construction"))
}

/// Reads a square symmetric relation matrix.
pub fn ingest_relation(path: &Path) -> Result<RelationMatrix> {
    let m = ingest_matrix(path)?;
    if m.nrows() != m.ncols() {
        return Err(BenchError::Validation(format!(
            "{}: relation matrix must be square, got {}x{}",
            path.display(),
            m.nrows(),
            m.ncols()
        )));
    }
    RelationMatrix::new(m).map_err(|e| BenchError::Validation(format!("{}: {e}", path.display())))
}

/// Reads one weight per line.
pub fn ingest_weights(path: &Path, mode: MassMode) -> Result<Distribution> {
    let m = ingest_matrix(path)?;
    if m.ncols() != 1 {
        return Err(BenchError::Validation(format!(
            "{}: weights file must have one value per line",
            path.display()
        )));
    }
    let w: Array1<f64> = m.column(0).to_owned();
    Distribution::new(w, mode).map_err(|e| BenchError::Validation(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| BenchError::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| BenchError::io(path, e))
}

/// Writes with shortest round-trip float formatting, so re-ingestion is exact.
pub fn write_matrix(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut w = create(path)?;
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| BenchError::io(path, e))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

pub fn write_weights(path: &Path, w: &[f64]) -> Result<()> {
    let mut out = create(path)?;
    for x in w {
        writeln!(out, "{x}").map_err(|e| BenchError::io(path, e))?;
    }
    out.flush().map_err(|e| BenchError::io(path, e))
}

/// Sidecar describing the files written by one command.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// File name to `[rows, cols]`.
    #[serde(default)]
    pub files: BTreeMap<String, [usize; 2]>,
}

impl Manifest {
    pub fn new(dataset: impl Into<String>) -> Self {
        Self {
            dataset: dataset.into(),
            ..Self::default()
        }
    }

    pub fn record_file(&mut self, path: &Path, shape: (usize, usize)) {
        let name = path
            .file_name()
            .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
        self.files.insert(name, [shape.0, shape.1]);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w).map_err(|e| BenchError::io(path, e))?;
        w.flush().map_err(|e| BenchError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
