//! CSV result export. Column order is fixed and every file gets a header
//! row, even when it has no data rows.

use std::fs;
use std::path::{Path, PathBuf};

use super::DataError;
use crate::harness::{AlgorithmId, ScenarioOutcome, SweepEntry, TraceRow, TrialResult};
use crate::metrics::EcdfTable;
use crate::model::{Network, Position};

pub const METRICS_HEADER: [&str; 6] = ["algorithm", "nlos_ratio", "trial", "rmse", "ger", "gde"];
pub const ECDF_HEADER: [&str; 2] = ["rmse", "probability"];
pub const TRACE_HEADER: [&str; 4] = ["iteration", "max_delta", "cost", "messages"];
pub const SWEEP_HEADER: [&str; 7] = ["samples_per_link", "trial", "rmse", "ger", "gde", "iterations", "messages"];
const ESTIMATE_HEADER: [&str; 6] = ["node", "role", "x", "y", "true_x", "true_y"];

/// Everything `export_results` writes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultTables {
    pub rows: Vec<TrialResult>,
    pub ecdfs: Vec<(AlgorithmId, f64, EcdfTable)>,
    pub traces: Vec<(AlgorithmId, f64, usize, Vec<TraceRow>)>,
}

impl ResultTables {
    pub fn from_outcomes(outcomes: &[ScenarioOutcome]) -> Self {
        let mut t = Self::default();
        for o in outcomes {
            t.rows.extend(o.results.iter().cloned());
            t.ecdfs.extend(o.ecdfs.iter().map(|(a, e)| (*a, o.nlos_ratio, e.clone())));
            t.traces.extend(o.traces.iter().map(|(a, trial, rows)| (*a, o.nlos_ratio, *trial, rows.clone())));
        }
        t
    }
}

/// NLOS ratio as written to files; an unknown (NaN) ratio, as for
/// external datasets, becomes `dataset` in file names and empty in cells.
fn ratio_label(nlos_ratio: f64) -> String {
    if nlos_ratio.is_nan() {
        "dataset".into()
    } else {
        nlos_ratio.to_string()
    }
}

fn ratio_cell(nlos_ratio: f64) -> String {
    if nlos_ratio.is_nan() {
        String::new()
    } else {
        nlos_ratio.to_string()
    }
}

pub fn ecdf_file_name(algo: AlgorithmId, nlos_ratio: f64) -> String {
    format!("ecdf_{algo}_{}.csv", ratio_label(nlos_ratio))
}

pub fn trace_file_name(algo: AlgorithmId, nlos_ratio: f64, trial: usize) -> String {
    format!("trace_{algo}_{}_{trial}.csv", ratio_label(nlos_ratio))
}

fn write_csv<const N: usize>(
    path: &Path,
    header: [&str; N],
    rows: impl IntoIterator<Item = [String; N]>,
) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| DataError::csv(path, e))?;
    w.write_record(header).map_err(|e| DataError::csv(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| DataError::csv(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

/// Write `metrics.csv`, one ECDF file per (algorithm, ratio) and one trace
/// file per stored trace into `out_dir`, creating it if needed. Returns the
/// paths written.
pub fn export_results(out_dir: impl AsRef<Path>, tables: &ResultTables) -> Result<Vec<PathBuf>, DataError> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join("metrics.csv");
    write_csv(
        &path,
        METRICS_HEADER,
        tables.rows.iter().map(|r| {
            [
                r.algorithm.to_string(),
                ratio_cell(r.nlos_ratio),
                r.trial.to_string(),
                r.rmse.to_string(),
                r.ger.to_string(),
                r.gde.to_string(),
            ]
        }),
    )?;
    written.push(path);

    for (algo, ratio, table) in &tables.ecdfs {
        let path = dir.join(ecdf_file_name(*algo, *ratio));
        write_csv(
            &path,
            ECDF_HEADER,
            table.values.iter().zip(&table.probabilities).map(|(v, p)| [v.to_string(), p.to_string()]),
        )?;
        written.push(path);
    }

    for (algo, ratio, trial, rows) in &tables.traces {
        let path = dir.join(trace_file_name(*algo, *ratio, *trial));
        write_csv(
            &path,
            TRACE_HEADER,
            rows.iter().map(|r| {
                [r.iteration.to_string(), r.max_delta.to_string(), r.cost.to_string(), r.messages.to_string()]
            }),
        )?;
        written.push(path);
    }
    Ok(written)
}

/// Write `sweep.csv` (one row per sample size and trial) and one
/// `ecdf_samples_<size>.csv` per size.
pub fn export_sweep(out_dir: impl AsRef<Path>, entries: &[SweepEntry]) -> Result<Vec<PathBuf>, DataError> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    let path = dir.join("sweep.csv");
    write_csv(
        &path,
        SWEEP_HEADER,
        entries.iter().flat_map(|e| {
            e.results.iter().map(move |r| {
                [
                    e.samples_per_link.to_string(),
                    r.trial.to_string(),
                    r.rmse.to_string(),
                    r.ger.to_string(),
                    r.gde.to_string(),
                    r.iterations_used.to_string(),
                    r.messages_sent.to_string(),
                ]
            })
        }),
    )?;
    let mut written = vec![path];
    for e in entries {
        let path = dir.join(format!("ecdf_samples_{}.csv", e.samples_per_link));
        write_csv(
            &path,
            ECDF_HEADER,
            e.ecdf.values.iter().zip(&e.ecdf.probabilities).map(|(v, p)| [v.to_string(), p.to_string()]),
        )?;
        written.push(path);
    }
    Ok(written)
}

/// Estimated and true position of every node.
pub fn export_estimates(
    path: impl AsRef<Path>,
    network: &Network<f64>,
    estimates: &[Position<f64>],
) -> Result<(), DataError> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    }
    write_csv(
        path,
        ESTIMATE_HEADER,
        estimates.iter().zip(network.positions()).enumerate().map(|(k, (est, truth))| {
            let role = if k < network.n_sensors() { "sensor" } else { "anchor" };
            [k.to_string(), role.into(), est.x.to_string(), est.y.to_string(), truth.x.to_string(), truth.y.to_string()]
        }),
    )
}
