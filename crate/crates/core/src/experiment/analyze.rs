//! `analyze`: recomputes diagnostics and the value-drift projection from a
//! run directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{
    write_csv, RunSummary, BASE_DIR, CONFIG_JSON, EDIT_KEYS_MAT, EDIT_VALUES_MAT, SUMMARY_JSON,
    SUM_MAT,
};
use crate::editor::{
    apply_sequentially, edited_pair_indices, sequential_edit, EditRequest, SequentialOptions,
};
use crate::error::{Error, Result};
use crate::linalg::text::read_mat;
use crate::memory::AssociativeMemory;
use crate::metrics::{diagnostics, value_drift, DiagnosticsRecord, ValueDriftReport};

pub const METRICS_CSV: &str = "metrics.csv";
pub const DRIFT_CSV: &str = "drift.csv";
/// Agreement required between recomputed and stored final diagnostics.
pub const SUMMARY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftRow {
    pub label: String,
    pub index: usize,
    pub pc1: f64,
    pub pc2: f64,
}

pub struct Analysis {
    pub metrics: Vec<DiagnosticsRecord>,
    pub drift: ValueDriftReport,
}

fn read_edits(dir: &Path) -> Result<Vec<EditRequest>> {
    let keys_path = dir.join(EDIT_KEYS_MAT);
    let keys = read_mat(&keys_path)?;
    let values = read_mat(&dir.join(EDIT_VALUES_MAT))?;
    if keys.rows() != values.rows() || keys.rows() == 0 {
        return Err(Error::file(
            keys_path,
            "edit keys and values disagree in count",
        ));
    }
    (0..keys.rows())
        .map(|i| {
            EditRequest::new(keys.row_vector(i), values.row_vector(i))
                .map_err(|e| Error::file(&keys_path, e))
        })
        .collect()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= SUMMARY_TOL * a.abs().max(b.abs()).max(1.0)
}

fn records_match(a: &DiagnosticsRecord, b: &DiagnosticsRecord) -> bool {
    a.edit_index == b.edit_index
        && close(a.cond, b.cond)
        && close(a.sigma_max_w, b.sigma_max_w)
        && close(a.sigma_min_w, b.sigma_min_w)
        && close(a.sigma_max_sum, b.sigma_max_sum)
        && close(a.efficacy, b.efficacy)
        && close(a.generalization, b.generalization)
        && close(a.locality, b.locality)
        && close(a.mean_recall_err, b.mean_recall_err)
}

/// Recomputes the metric series and value drift of the run in `trace_dir`.
///
/// The final record is computed from the stored matrices and must agree
/// with `summary.json`; earlier checkpoints come from replaying the edits.
pub fn analyze(trace_dir: &Path) -> Result<Analysis> {
    let cfg_path = trace_dir.join(CONFIG_JSON);
    let cfg = ExperimentConfig::load(&cfg_path).map_err(|e| Error::file(&cfg_path, e))?;
    let mem = AssociativeMemory::load(&trace_dir.join(BASE_DIR))?;
    let sum_path = trace_dir.join(SUM_MAT);
    let sum = read_mat(&sum_path)?;
    if sum.shape() != mem.w().shape() {
        return Err(Error::file(
            sum_path,
            "shape does not match the base memory",
        ));
    }
    let edits = read_edits(trace_dir)?;
    if edits.len() != cfg.num_edits {
        return Err(Error::file(
            trace_dir.join(EDIT_KEYS_MAT),
            "edit count does not match config",
        ));
    }
    let summary_path = trace_dir.join(SUMMARY_JSON);
    let text = std::fs::read_to_string(&summary_path).map_err(|e| Error::file(&summary_path, e))?;
    let summary: RunSummary =
        serde_json::from_str(&text).map_err(|e| Error::file(&summary_path, e))?;

    let final_w = mem.w() + &sum;
    let edited = edited_pair_indices(&mem, &edits);
    let final_record = diagnostics(
        edits.len(),
        &final_w,
        &sum,
        &mem,
        &edits,
        &edited,
        &cfg.metric_settings(),
    )?;
    if !records_match(&final_record, &summary.final_record) {
        return Err(Error::file(
            &summary_path,
            "final diagnostics disagree with the stored matrices",
        ));
    }

    let opts = SequentialOptions {
        rule: cfg.rule(),
        restraint: cfg.restraint,
        checkpoint_every: cfg.checkpoint_every,
        metrics: cfg.metric_settings(),
    };
    let trace = sequential_edit(&mem, &edits, &opts)?;
    let mut metrics = trace.checkpoints;
    *metrics.last_mut().expect("final checkpoint") = final_record;

    let drift = match cfg.restraint {
        None => value_drift(&edits, &final_w, None, cfg.first_m())?,
        Some(_) => {
            let unrestrained = apply_sequentially(&mem, &edits, cfg.rule())?;
            value_drift(&edits, &unrestrained, Some(&final_w), cfg.first_m())?
        }
    };
    Ok(Analysis { metrics, drift })
}

pub fn drift_rows(report: &ValueDriftReport) -> Vec<DriftRow> {
    report
        .series
        .iter()
        .flat_map(|s| {
            s.projected.iter().enumerate().map(|(i, c)| DriftRow {
                label: s.label.as_str().to_string(),
                index: i,
                pc1: c[0],
                pc2: c[1],
            })
        })
        .collect()
}

pub fn cmd_analyze(trace_dir: &Path, out_dir: &Path) -> Result<Analysis> {
    let analysis = analyze(trace_dir)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
    write_csv(&out_dir.join(METRICS_CSV), &analysis.metrics)?;
    write_csv(&out_dir.join(DRIFT_CSV), &drift_rows(&analysis.drift))?;
    Ok(analysis)
}
