//! Per-seed run records and their summaries, written as CSV.

use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub method: String,
    pub seed: u64,
    /// Seeds tried, including fresh-seed retries.
    pub attempts: usize,
    pub distance: Option<f64>,
    pub seconds: f64,
    pub peak_bytes: u64,
    pub outer_rounds: usize,
    /// Objective after each outer round, `;`-separated.
    pub objective_trace: String,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn trace(&self) -> Vec<f64> {
        self.objective_trace
            .split(';')
            .filter(|t| !t.is_empty())
            .filter_map(|t| t.parse().ok())
            .collect()
    }
}

pub fn format_trace(trace: &[f64]) -> String {
    trace.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub method: String,
    pub runs: usize,
    pub failures: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub mean_seconds: f64,
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}

pub fn summarize(records: &[RunRecord]) -> Summary {
    let ok: Vec<f64> = records.iter().filter_map(|r| r.distance).collect();
    let (mean, std) = mean_std(&ok).map_or((None, None), |(m, s)| (Some(m), Some(s)));
    let mean_seconds = if records.is_empty() {
        0.0
    } else {
        records.iter().map(|r| r.seconds).sum::<f64>() / records.len() as f64
    };
    Summary {
        config_hash: records.first().map(|r| r.config_hash.clone()).unwrap_or_default(),
        method: records.first().map(|r| r.method.clone()).unwrap_or_default(),
        runs: records.len(),
        failures: records.len() - ok.len(),
        mean,
        std,
        mean_seconds,
    }
}

/// Appends rows to a CSV file, writing the header only when the file is new.
pub struct Appender {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl Appender {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| BenchError::io(parent, e))?;
        }
        let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| BenchError::io(path, e))?;
        let writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        Ok(Self {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn append<T: Serialize>(&mut self, row: &T) -> Result<()> {
        self.writer.serialize(row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| BenchError::io(&self.path, e))
    }
}

pub fn append_all<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut a = Appender::open(path)?;
    for r in rows {
        a.append(r)?;
    }
    a.finish()
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}
