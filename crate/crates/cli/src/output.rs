//! Serialized shapes of command output and report files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zosd_core::eval::{ReportMetadata, SCHEMA_VERSION};
use zosd_core::prob::LabelProbability;
use zosd_core::scoring::{top_contributors, Diagnostic, CONTRIBUTOR_THRESHOLD};
use zosd_core::{EvalReport, Label, ScoreResult, SoftmaxDistribution};

use crate::error::{CliError, CliResult};

/// Output of `zosd score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOutput {
    pub schema_version: u32,
    pub image_id: String,
    pub score: f64,
    pub msp_score: f64,
    pub predicted_seen: Label,
    /// Labels with probability at least 0.1, most probable first.
    pub top_contributors: Vec<LabelProbability>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<SoftmaxDistribution>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
    pub metadata: ReportMetadata,
}

impl ScoreOutput {
    pub fn new(result: ScoreResult, metadata: ReportMetadata, verbose: bool) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            top_contributors: top_contributors(&result, CONTRIBUTOR_THRESHOLD),
            image_id: result.image_id,
            score: result.score,
            msp_score: result.msp_score,
            predicted_seen: result.predicted_seen,
            distribution: verbose.then_some(result.distribution),
            diagnostics: result.diagnostics,
            metadata,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub split: String,
    pub n_seen_classes: usize,
    pub n_unseen_classes: usize,
    pub n_seen_images: usize,
    pub n_unseen_images: usize,
    pub openness_pct: f64,
    pub auroc: f64,
    pub auroc_msp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub split: String,
    pub class: String,
    pub unseen: bool,
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub split: String,
    pub image_id: String,
    pub unseen: bool,
    pub score: f64,
    pub msp_score: f64,
    pub predicted_seen: String,
    pub n_candidates: usize,
}

pub fn split_rows(report: &EvalReport) -> Vec<SplitRow> {
    report
        .splits
        .iter()
        .map(|s| SplitRow {
            split: s.name.clone(),
            n_seen_classes: s.n_seen_classes,
            n_unseen_classes: s.n_unseen_classes,
            n_seen_images: s.n_seen_images,
            n_unseen_images: s.n_unseen_images,
            openness_pct: s.openness_pct,
            auroc: s.auroc,
            auroc_msp: s.auroc_msp,
        })
        .collect()
}

pub fn histogram_rows(report: &EvalReport) -> Vec<HistogramRow> {
    let mut rows = Vec::new();
    for split in &report.splits {
        for h in &split.histograms {
            let bins = h.counts.len();
            for (bin, &count) in h.counts.iter().enumerate() {
                rows.push(HistogramRow {
                    split: split.name.clone(),
                    class: h.class.clone(),
                    unseen: h.unseen,
                    bin,
                    lo: bin as f64 / bins as f64,
                    hi: (bin + 1) as f64 / bins as f64,
                    count,
                });
            }
        }
    }
    rows
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> CliResult<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::Internal(format!("csv: {e}")))?;
    }
    writer.into_inner().map_err(|e| CliError::Internal(format!("csv: {e}")))
}

pub fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Internal(format!("json: {e}")))
}

/// Writes every file under a temporary name first, then renames them into
/// place. Nothing is renamed unless every write succeeded.
pub fn write_all_atomic(dir: &Path, files: &[(&str, Vec<u8>)]) -> CliResult<()> {
    let io = |path: &Path, e: std::io::Error| CliError::MissingData(format!("cannot write {}: {e}", path.display()));
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::new();
    for (name, bytes) in files {
        let tmp = dir.join(format!(".{name}.tmp"));
        if let Err(e) = fs::write(&tmp, bytes) {
            for (t, _) in &staged {
                let _ = fs::remove_file(t);
            }
            return Err(io(&tmp, e));
        }
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, dest) in &staged {
        fs::rename(tmp, dest).map_err(|e| io(dest, e))?;
    }
    Ok(())
}
