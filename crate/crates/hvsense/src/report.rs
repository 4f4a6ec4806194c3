//! CSV output: one row per trial plus a per-point summary next to it.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bench::{PointSummary, SweepOutput, TrialRecord};
use crate::BenchError;

/// `runs.csv` → `runs.summary.csv`.
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.csv"))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), BenchError> {
    let io = |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io)
}

pub fn write_rows(path: &Path, rows: &[TrialRecord]) -> Result<(), BenchError> {
    write_csv(path, rows)
}

pub fn write_summary(path: &Path, summary: &[PointSummary]) -> Result<(), BenchError> {
    write_csv(path, summary)
}

pub fn read_rows(path: &Path) -> Result<Vec<TrialRecord>, BenchError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<_>, _>>()?)
}

/// Writes the rows to `out` and the summary to [`summary_path`]; returns the
/// summary location.
pub fn write_sweep(out: &Path, sweep: &SweepOutput) -> Result<PathBuf, BenchError> {
    write_rows(out, &sweep.rows)?;
    let s = summary_path(out);
    write_summary(&s, &sweep.summary)?;
    Ok(s)
}
