//! Benchmark harness: openness, AUROC, split aggregation and histograms.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::StopList;
use crate::config::ScoringConfig;
use crate::error::{Error, Result};
use crate::label::seen_labels;
use crate::scoring::{run_inference, ScoreResult};
use crate::store::backend::EmbeddingBackend;
use crate::store::logits::LogitsStore;
use crate::store::split::SplitSpec;

pub const SCHEMA_VERSION: u32 = 1;
pub const HISTOGRAM_BINS: usize = 20;

/// Openness of a task in percent:
/// `(1 - sqrt(2 * n_train / (n_test + n_target))) * 100`.
pub fn openness(n_train: usize, n_target: usize, n_test: usize) -> Result<f64> {
    if n_train == 0 || n_target == 0 || n_test < n_target {
        return Err(Error::InvalidCounts {
            n_train,
            n_target,
            n_test,
        });
    }
    let ratio = 2.0 * n_train as f64 / (n_test + n_target) as f64;
    Ok((1.0 - ratio.sqrt()) * 100.0)
}

/// Two-decimal rendering that truncates toward zero, the convention used by
/// the published openness tables (13.397... is reported as 13.39).
pub fn format_percent(value: f64) -> String {
    // Nudge values that sit on a hundredth but are stored just below it.
    let truncated = ((value * 100.0) + value.signum() * 1e-9).trunc() / 100.0;
    format!("{truncated:.2}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageOutcome {
    pub image_id: String,
    pub score: f64,
    pub is_unseen: bool,
}

/// Area under the ROC curve with unseen outcomes as the positive class.
///
/// Computed as the Mann-Whitney statistic from average ranks:
/// `U = R_pos - n_pos (n_pos + 1) / 2`, `AUROC = U / (n_pos n_neg)`. Ranks are
/// tracked doubled as integers so the statistic is exact, which makes it equal
/// the pairwise count `#(pos > neg) + 0.5 #(pos == neg)` bit for bit.
pub fn auroc(outcomes: &[ImageOutcome]) -> Result<f64> {
    if outcomes.iter().any(|o| !o.score.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n_pos = outcomes.iter().filter(|o| o.is_unseen).count();
    let n_neg = outcomes.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::OneClassOnly {
            n_unseen: n_pos,
            n_seen: n_neg,
        });
    }
    let mut order: Vec<usize> = (0..outcomes.len()).collect();
    order.sort_by(|&a, &b| outcomes[a].score.total_cmp(&outcomes[b].score));

    // Sum of doubled average ranks of the positives. A tie group occupying
    // sorted positions i..j (0-based) shares rank (i + 1 + j) / 2.
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && outcomes[order[j]].score == outcomes[order[i]].score {
            j += 1;
        }
        let positives = order[i..j].iter().filter(|&&k| outcomes[k].is_unseen).count() as u128;
        doubled_rank_sum += positives * (i as u128 + 1 + j as u128);
        i = j;
    }
    let n_pos = n_pos as u128;
    let doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
    Ok(doubled_u as f64 / (2.0 * n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation (divides by n).
    pub std: f64,
}

pub fn aggregate(values: &[f64]) -> Result<MeanStd> {
    if values.is_empty() {
        return Err(Error::EmptyList);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(MeanStd { mean, std: var.sqrt() })
}

/// Equal-width bins over `[0, 1]`; each bin is `[lo, hi)` except the last,
/// which also takes 1.0.
pub fn histogram(scores: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins == 0 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    let mut counts = vec![0; bins];
    for &s in scores {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::OutOfRange(s));
        }
        let bin = ((s * bins as f64).floor() as usize).min(bins - 1);
        counts[bin] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub class: String,
    pub unseen: bool,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub name: String,
    pub n_seen_classes: usize,
    pub n_unseen_classes: usize,
    pub n_seen_images: usize,
    pub n_unseen_images: usize,
    pub openness_pct: f64,
    /// AUROC of the open-set score.
    pub auroc: f64,
    /// AUROC of the maximum-softmax-probability baseline.
    pub auroc_msp: f64,
    /// Open-set score histograms per class.
    pub histograms: Vec<ClassHistogram>,
}

/// Everything produced for one split.
#[derive(Debug, Clone)]
pub struct SplitEvaluation {
    pub report: SplitReport,
    pub results: Vec<(ScoreResult, bool)>,
}

impl SplitEvaluation {
    pub fn outcomes(&self) -> Vec<ImageOutcome> {
        self.results
            .iter()
            .map(|(r, unseen)| ImageOutcome {
                image_id: r.image_id.clone(),
                score: r.score,
                is_unseen: *unseen,
            })
            .collect()
    }

    pub fn msp_outcomes(&self) -> Vec<ImageOutcome> {
        self.results
            .iter()
            .map(|(r, unseen)| ImageOutcome {
                image_id: r.image_id.clone(),
                score: r.msp_score,
                is_unseen: *unseen,
            })
            .collect()
    }
}

/// Scores every test image of `split` and summarizes the split.
///
/// Runs on the current rayon pool. Results are collected in image order, so
/// the output does not depend on the number of threads.
pub fn evaluate(
    split: &SplitSpec,
    backend: &dyn EmbeddingBackend,
    logits: &LogitsStore,
    config: &ScoringConfig,
    stoplist: &StopList,
) -> Result<SplitEvaluation> {
    split.validate()?;
    config.validate()?;
    let seen = seen_labels(&split.seen)?;

    let scored: Vec<Result<(ScoreResult, bool)>> = split
        .images
        .par_iter()
        .map(|image| {
            let result = run_inference(&image.id, &seen, backend, logits, config, stoplist)?;
            Ok((result, split.is_unseen_class(&image.class)))
        })
        .collect();
    let results = scored.into_iter().collect::<Result<Vec<_>>>()?;

    let outcomes = |pick: fn(&ScoreResult) -> f64| -> Vec<ImageOutcome> {
        results
            .iter()
            .map(|(r, unseen)| ImageOutcome {
                image_id: r.image_id.clone(),
                score: pick(r),
                is_unseen: *unseen,
            })
            .collect()
    };
    let auroc_score = auroc(&outcomes(|r| r.score))?;
    let auroc_msp = auroc(&outcomes(|r| r.msp_score))?;

    let by_id: HashMap<&str, f64> = results.iter().map(|(r, _)| (r.image_id.as_str(), r.score)).collect();
    let histograms = split
        .images_by_class()
        .into_iter()
        .map(|(class, images)| {
            let scores: Vec<f64> = images.iter().map(|img| by_id[img.id.as_str()]).collect();
            Ok(ClassHistogram {
                class: class.to_owned(),
                unseen: split.is_unseen_class(class),
                counts: histogram(&scores, HISTOGRAM_BINS)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n_seen_classes = split.seen.len();
    let report = SplitReport {
        name: split.name.clone(),
        n_seen_classes,
        n_unseen_classes: split.unseen.len(),
        n_seen_images: results.iter().filter(|(_, u)| !u).count(),
        n_unseen_images: results.iter().filter(|(_, u)| *u).count(),
        openness_pct: openness(n_seen_classes, n_seen_classes, n_seen_classes + split.unseen.len())?,
        auroc: auroc_score,
        auroc_msp,
        histograms,
    };
    Ok(SplitEvaluation { report, results })
}

/// Settings of the synthetic backend, echoed when it was used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEcho {
    pub dim: usize,
    pub seed: u64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub temperature: f64,
    pub k: usize,
    pub template: String,
    pub filter_stopwords: bool,
    pub dedup_against_seen: bool,
    pub skip_missing_candidates: bool,
    pub std_convention: String,
    pub auroc_positive_class: String,
    pub score_definition: String,
    pub msp_definition: String,
    pub histogram_bins: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticEcho>,
}

impl ReportMetadata {
    pub fn new(config: &ScoringConfig, synthetic: Option<SyntheticEcho>) -> Self {
        Self {
            temperature: config.temperature,
            k: config.k,
            template: config.template.as_str().to_owned(),
            filter_stopwords: config.filter_stopwords,
            dedup_against_seen: config.dedup_against_seen,
            skip_missing_candidates: config.skip_missing_candidates,
            std_convention: "population".into(),
            auroc_positive_class: "unseen".into(),
            score_definition: "1 - sum of softmax probability over seen labels (higher = more likely unseen)".into(),
            msp_definition: "1 - max softmax probability over seen labels only (higher = more likely unseen)".into(),
            histogram_bins: HISTOGRAM_BINS,
            synthetic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_splits: usize,
    pub mean_auroc: f64,
    pub std_auroc: f64,
    pub mean_auroc_msp: f64,
    pub std_auroc_msp: f64,
    pub openness_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub metadata: ReportMetadata,
    pub config_echo: ScoringConfig,
    pub splits: Vec<SplitReport>,
    pub aggregate: Aggregate,
}

impl EvalReport {
    pub fn new(splits: Vec<SplitReport>, config: &ScoringConfig, synthetic: Option<SyntheticEcho>) -> Result<Self> {
        let score = aggregate(&splits.iter().map(|s| s.auroc).collect::<Vec<_>>())?;
        let msp = aggregate(&splits.iter().map(|s| s.auroc_msp).collect::<Vec<_>>())?;
        let openness = aggregate(&splits.iter().map(|s| s.openness_pct).collect::<Vec<_>>())?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            metadata: ReportMetadata::new(config, synthetic),
            config_echo: config.clone(),
            aggregate: Aggregate {
                n_splits: splits.len(),
                mean_auroc: score.mean,
                std_auroc: score.std,
                mean_auroc_msp: msp.mean,
                std_auroc_msp: msp.std,
                openness_pct: openness.mean,
            },
            splits,
        })
    }
}
