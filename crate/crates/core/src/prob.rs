use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;

/// Temperature-scaled softmax with max subtraction.
///
/// `p_i = exp(t*l_i - m) / sum_j exp(t*l_j - m)` where `m = max_j t*l_j`.
pub fn softmax(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite);
    }
    let scaled: Vec<f64> = logits.iter().map(|&l| temperature * l).collect();
    let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `ln sum_j exp(l_j)`, computed around the maximum.
pub(crate) fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelProbability {
    pub label: Label,
    pub probability: f64,
}

/// Categorical distribution over an ordered list of labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxDistribution {
    pub entries: Vec<LabelProbability>,
}

impl SoftmaxDistribution {
    /// Pairs labels with probabilities; the lengths must agree.
    pub fn new(labels: Vec<Label>, probabilities: Vec<f64>) -> Result<Self> {
        if labels.len() != probabilities.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels but {} probabilities",
                labels.len(),
                probabilities.len()
            )));
        }
        Ok(Self {
            entries: labels
                .into_iter()
                .zip(probabilities)
                .map(|(label, probability)| LabelProbability { label, probability })
                .collect(),
        })
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.probability).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
