//! CSV trajectories and JSON summaries.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{GiniRow, GridReport, RacetrackBatch, ScenarioOutcome, ScenarioResult, VERSION};
use crate::error::{Error, Result};
use crate::longrun::Trajectory;

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `t,lambda_<id>...` rows for every stored state.
pub fn write_trajectory_csv(trajectory: &Trajectory, ids: &[&str], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_writer(create_file(path)?);
    let header = std::iter::once("t".to_string()).chain(ids.iter().map(|id| format!("lambda_{id}")));
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for (t, lambda) in trajectory.times.iter().zip(&trajectory.states) {
        let row = std::iter::once(t).chain(lambda).map(f64::to_string);
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Pretty-printed JSON followed by a newline.
pub fn write_summary<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create_file(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Error::io(path, e.into()))?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct FailureRecord<'a> {
    scenario: &'a str,
    error: String,
    exit_code: i32,
}

#[derive(Serialize)]
struct Summary<'a> {
    version: &'a str,
    gini_table: Vec<GiniRow>,
    results: Vec<&'a ScenarioResult>,
    failures: Vec<FailureRecord<'a>>,
}

/// File-system-safe stem for a scenario name.
pub(crate) fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') { c } else { '_' })
        .collect()
}

/// Writes `trajectories/<scenario>.csv` for each completed scenario and a
/// single `summary.json`. Returns the written paths in a stable order.
pub fn export_results(report: &GridReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let out_dir = out_dir.as_ref();
    let traj_dir = out_dir.join("trajectories");
    create_dir(&traj_dir)?;
    let mut written = Vec::new();
    let mut failures = Vec::new();
    for outcome in &report.outcomes {
        match outcome {
            ScenarioOutcome::Completed(run) => {
                let ids: Vec<&str> = run.result.region_ids.iter().map(String::as_str).collect();
                let path = traj_dir.join(format!("{}.csv", file_stem(&run.result.scenario)));
                write_trajectory_csv(&run.trajectory, &ids, &path)?;
                written.push(path);
            }
            ScenarioOutcome::Failed { name, error } => failures.push(FailureRecord {
                scenario: name,
                error: error.to_string(),
                exit_code: error.exit_code(),
            }),
        }
    }
    let summary = Summary {
        version: VERSION,
        gini_table: report.gini_table(),
        results: report.results().collect(),
        failures,
    };
    let path = out_dir.join("summary.json");
    write_summary(&summary, &path)?;
    written.push(path);
    Ok(written)
}

/// Writes `racetrack.json` (histogram and per-seed outcomes).
pub fn export_racetrack(batch: &RacetrackBatch, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    create_dir(out_dir)?;
    let path = out_dir.join("racetrack.json");
    write_summary(batch, &path)?;
    Ok(path)
}
