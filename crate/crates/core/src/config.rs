use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::PromptTemplate;

pub const DEFAULT_TEMPERATURE: f64 = 100.0;
pub const DEFAULT_K: usize = 35;

/// Knobs for candidate extraction and scoring. Echoed into every result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringConfig {
    /// Multiplier applied to cosine similarities before the softmax.
    pub temperature: f64,
    /// Words taken from each decoder position.
    pub k: usize,
    pub filter_stopwords: bool,
    pub dedup_against_seen: bool,
    pub template: PromptTemplate,
    /// Drop generated words without a prompt embedding instead of failing.
    pub skip_missing_candidates: bool,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            k: DEFAULT_K,
            filter_stopwords: true,
            dedup_against_seen: true,
            template: PromptTemplate::default(),
            skip_missing_candidates: false,
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = ScoringConfig::default();
        c.validate().unwrap();
        assert_eq!(c.temperature, 100.0);
        assert_eq!(c.k, 35);
        assert_eq!(c.template.as_str(), "This is a photo of a {}.");
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = ScoringConfig {
            k: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        c.k = 1;
        c.temperature = 0.0;
        assert!(c.validate().is_err());
        c.temperature = f64::NAN;
        assert!(c.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c: ScoringConfig = serde_json::from_str(r#"{"k": 5}"#).unwrap();
        assert_eq!(c.k, 5);
        assert_eq!(c.temperature, 100.0);
    }
}
