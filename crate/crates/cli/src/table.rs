//! Per-trial rows, per-iteration aggregates, and their CSV forms.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mfpg_core::{Estimator, RunTrace};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const TRIALS_FILE: &str = "trials.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const TIMING_FILE: &str = "timing.csv";

pub const AGGREGATE_NOTE: &str = "# median_gap and std_gap are taken across trials at each iteration; \
std_gap is the sample standard deviation (n - 1 denominator, 0 for a single trial); \
normalized_std = std_gap / median_gap; trials that stopped early contribute only to the iterations they reached";

/// One iterate of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub estimator: String,
    pub seed: u64,
    pub iteration: usize,
    pub gap: f64,
    /// Gap relative to the gap of the initial policy.
    pub normalized_gap: f64,
    /// Empty on the final iterate, where no estimate is taken.
    pub estimation_error: Option<f64>,
    pub spectral_radius: f64,
    /// Final status of the trial the row belongs to.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub estimator: String,
    pub iteration: usize,
    pub trials: usize,
    pub median_gap: f64,
    pub std_gap: f64,
    pub normalized_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub estimator: String,
    pub seed: u64,
    pub wall_time_s: f64,
}

/// Finished run of one estimator on one seed.
#[derive(Debug, Clone)]
pub struct Trial {
    pub estimator: Estimator,
    pub seed: u64,
    pub trace: RunTrace,
    pub wall_time_s: f64,
}

impl Trial {
    pub fn rows(&self) -> Vec<ResultRow> {
        let gap0 = self.trace.records.first().map_or(f64::NAN, |r| r.gap);
        self.trace
            .records
            .iter()
            .filter(|r| r.gap.is_finite())
            .map(|r| ResultRow {
                estimator: self.estimator.name().to_string(),
                seed: self.seed,
                iteration: r.iteration,
                gap: r.gap,
                normalized_gap: r.gap / gap0,
                estimation_error: r.estimation_error,
                spectral_radius: r.spectral_radius,
                status: self.trace.status.label().to_string(),
            })
            .collect()
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

pub fn sample_std(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// Groups rows by estimator (in first-seen order) and iteration.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.estimator.as_str()) {
            names.push(&r.estimator);
        }
    }
    let mut out = Vec::new();
    for name in names {
        let own: Vec<&ResultRow> = rows.iter().filter(|r| r.estimator == name).collect();
        let last = own.iter().map(|r| r.iteration).max().unwrap_or(0);
        for it in 0..=last {
            let gaps: Vec<f64> = own.iter().filter(|r| r.iteration == it).map(|r| r.gap).collect();
            if gaps.is_empty() {
                continue;
            }
            let med = median(&gaps);
            let std = sample_std(&gaps);
            out.push(AggregateRow {
                estimator: name.to_string(),
                iteration: it,
                trials: gaps.len(),
                median_gap: med,
                std_gap: std,
                normalized_std: std / med,
            });
        }
    }
    out
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        kind => CliError::table(path, format!("{kind:?}")),
    }
}

fn write_rows<T: Serialize>(path: &Path, note: Option<&str>, rows: &[T], header: &[&str]) -> Result<()> {
    let mut file = create(path)?;
    if let Some(note) = note {
        writeln!(file, "{note}").map_err(|e| CliError::io(path, e))?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

pub fn write_trials(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let header = [
        "estimator",
        "seed",
        "iteration",
        "gap",
        "normalized_gap",
        "estimation_error",
        "spectral_radius",
        "status",
    ];
    write_rows(path, None, rows, &header)
}

pub fn read_trials(path: &Path) -> Result<Vec<ResultRow>> {
    read_rows(path)
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let header = [
        "estimator",
        "iteration",
        "trials",
        "median_gap",
        "std_gap",
        "normalized_std",
    ];
    write_rows(path, Some(AGGREGATE_NOTE), rows, &header)
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    read_rows(path)
}

pub fn write_timing(path: &Path, rows: &[TimingRow]) -> Result<()> {
    write_rows(path, None, rows, &["estimator", "seed", "wall_time_s"])
}
