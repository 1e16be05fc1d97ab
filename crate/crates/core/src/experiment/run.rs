//! `run`: one seeded sequential-editing experiment written to a directory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::editor::{generate_edits, sequential_edit, EditRequest, EditTrace, SequentialOptions};
use crate::error::{Error, Result};
use crate::linalg::text::write_mat;
use crate::linalg::Matrix;
use crate::memory::{synthesize_memory, AssociativeMemory};
use crate::metrics::DiagnosticsRecord;
use crate::prune::RestraintReport;

pub const CHECKPOINTS_CSV: &str = "checkpoints.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CONFIG_JSON: &str = "config.json";
pub const SUM_MAT: &str = "sum.mat";
pub const EDIT_KEYS_MAT: &str = "edit_keys.mat";
pub const EDIT_VALUES_MAT: &str = "edit_values.mat";
pub const BASE_DIR: &str = "base";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestraintSummary {
    pub edit_index: usize,
    #[serde(flatten)]
    pub report: RestraintReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub initial: DiagnosticsRecord,
    #[serde(rename = "final")]
    pub final_record: DiagnosticsRecord,
    pub restraints: Vec<RestraintSummary>,
}

/// One line of `checkpoints.csv`. Checkpoint rows leave the restraint
/// columns blank and restraint rows leave the diagnostics blank.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRow {
    pub edit_index: usize,
    pub cond: Option<f64>,
    pub sigma_max_w: Option<f64>,
    pub sigma_min_w: Option<f64>,
    pub sigma_max_sum: Option<f64>,
    pub efficacy: Option<f64>,
    pub locality: Option<f64>,
    pub mean_recall_err: Option<f64>,
    pub restrain_event_index: Option<usize>,
    pub restrained_count: Option<usize>,
    pub sigma_max_before: Option<f64>,
    pub sigma_max_after: Option<f64>,
    pub cond_before: Option<f64>,
    pub cond_after: Option<f64>,
}

impl CheckpointRow {
    pub fn is_checkpoint(&self) -> bool {
        self.restrain_event_index.is_none()
    }
}

impl From<&DiagnosticsRecord> for CheckpointRow {
    fn from(d: &DiagnosticsRecord) -> Self {
        CheckpointRow {
            edit_index: d.edit_index,
            cond: Some(d.cond),
            sigma_max_w: Some(d.sigma_max_w),
            sigma_min_w: Some(d.sigma_min_w),
            sigma_max_sum: Some(d.sigma_max_sum),
            efficacy: Some(d.efficacy),
            locality: Some(d.locality),
            mean_recall_err: Some(d.mean_recall_err),
            ..Default::default()
        }
    }
}

/// Everything a run produces, before it is written out.
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub memory: AssociativeMemory,
    pub trace: EditTrace,
    pub summary: RunSummary,
}

/// Synthesizes the memory and edit stream for `cfg` and runs the edits.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let memory = synthesize_memory(cfg.p, cfg.q, cfg.num_pairs, cfg.seed)?;
    let edits = generate_edits(&memory, cfg.num_edits, cfg.stream_options(), cfg.seed)?;
    let opts = SequentialOptions {
        rule: cfg.rule(),
        restraint: cfg.restraint,
        checkpoint_every: cfg.checkpoint_every,
        metrics: cfg.metric_settings(),
    };
    let trace = sequential_edit(&memory, &edits, &opts)?;
    let summary = RunSummary {
        initial: trace.checkpoints[0],
        final_record: *trace.checkpoints.last().expect("final checkpoint"),
        restraints: trace
            .restraints
            .iter()
            .map(|r| RestraintSummary {
                edit_index: r.edit_index,
                report: r.report,
            })
            .collect(),
    };
    Ok(RunOutput {
        config: cfg.clone(),
        memory,
        trace,
        summary,
    })
}

pub fn checkpoint_rows(trace: &EditTrace) -> Vec<CheckpointRow> {
    let mut rows = Vec::new();
    let mut events = trace.restraints.iter().enumerate().peekable();
    for c in &trace.checkpoints {
        while let Some((i, r)) = events.next_if(|(_, r)| r.edit_index <= c.edit_index) {
            rows.push(CheckpointRow {
                edit_index: r.edit_index,
                restrain_event_index: Some(i),
                restrained_count: Some(r.report.restrained_count),
                sigma_max_before: Some(r.report.sigma_max_before),
                sigma_max_after: Some(r.report.sigma_max_after),
                cond_before: Some(r.report.cond_before),
                cond_after: Some(r.report.cond_after),
                ..Default::default()
            });
        }
        rows.push(c.into());
    }
    rows
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::file(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::file(path, e))?;
    }
    w.flush().map_err(|e| Error::file(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::file(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::file(path, e))
}

pub fn edit_matrices(edits: &[EditRequest]) -> Result<(Matrix, Matrix)> {
    let keys: Vec<_> = edits.iter().map(|e| e.key.clone()).collect();
    let values: Vec<_> = edits.iter().map(|e| e.new_value.clone()).collect();
    let q = keys.first().map_or(0, |k| k.len());
    let p = values.first().map_or(0, |v| v.len());
    Ok((Matrix::from_rows(&keys, q)?, Matrix::from_rows(&values, p)?))
}

impl RunOutput {
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
        self.memory.save(&out_dir.join(BASE_DIR))?;
        write_mat(&out_dir.join(SUM_MAT), &self.trace.update_sum)?;
        let (keys, values) = edit_matrices(&self.trace.edits)?;
        write_mat(&out_dir.join(EDIT_KEYS_MAT), &keys)?;
        write_mat(&out_dir.join(EDIT_VALUES_MAT), &values)?;
        write_csv(
            &out_dir.join(CHECKPOINTS_CSV),
            &checkpoint_rows(&self.trace),
        )?;
        let path = out_dir.join(CONFIG_JSON);
        std::fs::write(&path, self.config.to_json()).map_err(|e| Error::file(&path, e))?;
        write_json(&out_dir.join(SUMMARY_JSON), &self.summary)
    }
}

/// Loads the config, runs it and writes every artifact into `out_dir`.
pub fn cmd_run(config_path: &Path, out_dir: &Path) -> Result<RunSummary> {
    let cfg = ExperimentConfig::load(config_path)?;
    let out = execute(&cfg)?;
    out.write(out_dir)?;
    Ok(out.summary)
}
