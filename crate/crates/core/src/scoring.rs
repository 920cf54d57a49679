//! Open-set scoring over seen labels plus generated candidates.
//!
//! Every label in `seen ++ generated` is rendered into the prompt template and
//! embedded; the cosine similarities to the image, scaled by the temperature,
//! go through one softmax. The open-set score is the probability mass that
//! lands on generated labels, `S(x) = 1 - sum_{y in seen} P(y|x)`.
//!
//! The maximum-softmax-probability baseline uses a separate softmax over the
//! seen labels only and is oriented so that larger means "more likely unseen":
//! `msp_score = 1 - max_y P_seen(y|x)`.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::candidates::{extract_candidates, CandidateSet, StopList};
use crate::config::ScoringConfig;
use crate::error::{Error, Result};
use crate::label::{render_prompt, Label, LabelKind};
use crate::prob::{softmax, LabelProbability, SoftmaxDistribution};
use crate::store::backend::EmbeddingBackend;
use crate::store::logits::LogitsStore;
use crate::vector::{cosine_checked, EmbeddingVector};

/// Threshold used when reporting the labels that drive a score.
pub const CONTRIBUTOR_THRESHOLD: f64 = 0.1;

/// Seen labels followed by generated candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSpace {
    seen: Vec<Label>,
    generated: CandidateSet,
}

impl LabelSpace {
    /// With `require_disjoint`, a generated name that equals a seen name
    /// (ignoring case) is an error.
    pub fn new(seen: Vec<Label>, generated: CandidateSet, require_disjoint: bool) -> Result<Self> {
        if seen.is_empty() {
            return Err(Error::EmptySeen);
        }
        let mut seen_names = HashSet::new();
        for label in &seen {
            if label.kind != LabelKind::Seen {
                return Err(Error::InvalidLabel(format!("{:?} is not a seen label", label.name)));
            }
            if !seen_names.insert(label.fold()) {
                return Err(Error::DuplicateLabel(label.name.clone()));
            }
        }
        let mut generated_names = HashSet::new();
        for label in generated.labels() {
            if label.kind != LabelKind::Generated {
                return Err(Error::InvalidLabel(format!(
                    "{:?} is not a generated label",
                    label.name
                )));
            }
            let folded = label.fold();
            if !generated_names.insert(folded.clone()) || (require_disjoint && seen_names.contains(&folded)) {
                return Err(Error::DuplicateLabel(label.name.clone()));
            }
        }
        Ok(Self { seen, generated })
    }

    pub fn seen(&self) -> &[Label] {
        &self.seen
    }

    pub fn generated(&self) -> &CandidateSet {
        &self.generated
    }

    pub fn len(&self) -> usize {
        self.seen.len() + self.generated.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Per-image notes that do not abort scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// No generated candidates survived filtering; the score is 0.
    EmptyCandidates,
    /// A cosine fell outside `[-1, 1]` through rounding and was clamped.
    ClampedCosine { label: String, raw: f64 },
    /// A generated word had no prompt embedding and was dropped.
    SkippedCandidate { label: String, prompt: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub image_id: String,
    pub distribution: SoftmaxDistribution,
    /// Probability mass on generated labels.
    pub score: f64,
    /// `1 - max` of the seen-only softmax.
    pub msp_score: f64,
    pub predicted_seen: Label,
    pub config_echo: ScoringConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

impl ScoreResult {
    pub fn seen_mass(&self) -> f64 {
        self.distribution
            .entries
            .iter()
            .filter(|e| e.label.kind == LabelKind::Seen)
            .map(|e| e.probability)
            .sum()
    }
}

fn label_logit(
    image: &EmbeddingVector,
    prompt_vec: &EmbeddingVector,
    label: &Label,
    diagnostics: &mut Vec<Diagnostic>,
) -> Result<f64> {
    let (cos, clamped) = cosine_checked(image, prompt_vec)?;
    if clamped {
        // Recompute the raw value only for the report.
        let raw: f64 = image
            .values()
            .iter()
            .zip(prompt_vec.values())
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum();
        diagnostics.push(Diagnostic::ClampedCosine {
            label: label.name.clone(),
            raw,
        });
    }
    Ok(cos)
}

/// Scores one image against a label space.
pub fn open_set_score(
    image_id: &str,
    image: &EmbeddingVector,
    space: &LabelSpace,
    backend: &dyn EmbeddingBackend,
    config: &ScoringConfig,
) -> Result<ScoreResult> {
    config.validate()?;
    let mut diagnostics = Vec::new();
    let mut labels = Vec::with_capacity(space.len());
    let mut logits = Vec::with_capacity(space.len());

    for label in &space.seen {
        let prompt = render_prompt(&config.template, label);
        let vec = backend
            .embed_text(&prompt)?
            .ok_or_else(|| Error::MissingTextEmbedding {
                label: label.name.clone(),
                prompt: prompt.clone(),
            })?;
        logits.push(label_logit(image, &vec, label, &mut diagnostics)?);
        labels.push(label.clone());
    }
    let n_seen = labels.len();

    for label in space.generated.labels() {
        let prompt = render_prompt(&config.template, label);
        match backend.embed_text(&prompt)? {
            Some(vec) => {
                logits.push(label_logit(image, &vec, label, &mut diagnostics)?);
                labels.push(label.clone());
            }
            None if config.skip_missing_candidates => {
                log::warn!(
                    "{image_id}: no prompt embedding for candidate {:?}, dropping it",
                    label.name
                );
                diagnostics.push(Diagnostic::SkippedCandidate {
                    label: label.name.clone(),
                    prompt,
                });
            }
            None => {
                return Err(Error::MissingTextEmbedding {
                    label: label.name.clone(),
                    prompt,
                })
            }
        }
    }
    if labels.len() == n_seen {
        diagnostics.push(Diagnostic::EmptyCandidates);
    }

    let probs = softmax(&logits, config.temperature)?;
    // Summing the generated tail (rather than 1 - seen) makes the empty case
    // exactly zero.
    let score = probs[n_seen..].iter().sum::<f64>().clamp(0.0, 1.0);

    let seen_probs = softmax(&logits[..n_seen], config.temperature)?;
    let (best, best_p) =
        seen_probs.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |(bi, bp), (i, &p)| if p > bp { (i, p) } else { (bi, bp) },
        );
    let msp_score = (1.0 - best_p).clamp(0.0, 1.0);

    Ok(ScoreResult {
        image_id: image_id.to_owned(),
        distribution: SoftmaxDistribution::new(labels, probs)?,
        score,
        msp_score,
        predicted_seen: space.seen[best].clone(),
        config_echo: config.clone(),
        diagnostics,
    })
}

/// Candidate extraction followed by scoring for one image.
pub fn run_inference(
    image_id: &str,
    seen: &[Label],
    backend: &dyn EmbeddingBackend,
    logits: &LogitsStore,
    config: &ScoringConfig,
    stoplist: &StopList,
) -> Result<ScoreResult> {
    let image = backend.embed_image(image_id)?;
    let decoded = logits
        .get(image_id)
        .ok_or_else(|| Error::MissingDecoderOutput(image_id.to_owned()))?;
    let candidates = extract_candidates(decoded, config, stoplist, seen)?;
    let space = LabelSpace::new(seen.to_vec(), candidates, config.dedup_against_seen)?;
    let result = open_set_score(image_id, &image, &space, backend, config)?;
    if result.diagnostics.contains(&Diagnostic::EmptyCandidates) {
        log::warn!("{image_id}: no candidate unseen labels after filtering; score is 0");
    }
    Ok(result)
}

/// Labels whose probability exceeds `threshold`, most probable first; ties
/// keep distribution order.
pub fn top_contributors(result: &ScoreResult, threshold: f64) -> Vec<LabelProbability> {
    let mut out: Vec<LabelProbability> = result
        .distribution
        .entries
        .iter()
        .filter(|e| e.probability > threshold)
        .cloned()
        .collect();
    out.sort_by(|a, b| b.probability.total_cmp(&a.probability));
    out
}

#[cfg(test)]
mod tests {
    use std::borrow::Cow;
    use std::collections::HashMap;

    use super::*;
    use crate::label::PromptTemplate;
    use proptest::prelude::*;

    /// Backend whose prompt vectors are built so that cosine(image, prompt)
    /// equals a requested value: image = e0, prompt = c*e0 + sqrt(1-c^2)*e1.
    struct CosineBackend {
        image: EmbeddingVector,
        prompts: HashMap<String, EmbeddingVector>,
    }

    impl CosineBackend {
        fn new(template: &PromptTemplate, cosines: &[(&str, f64)]) -> Self {
            let image = EmbeddingVector::normalize(&[1.0, 0.0]).unwrap();
            let prompts = cosines
                .iter()
                .map(|(name, c)| {
                    let v = EmbeddingVector::normalize(&[*c, (1.0 - c * c).max(0.0).sqrt()]).unwrap();
                    (template.render(name), v)
                })
                .collect();
            Self { image, prompts }
        }
    }

    impl EmbeddingBackend for CosineBackend {
        fn embed_image(&self, image_id: &str) -> Result<Cow<'_, EmbeddingVector>> {
            if image_id == "img" {
                Ok(Cow::Borrowed(&self.image))
            } else {
                Err(Error::MissingImage(image_id.into()))
            }
        }

        fn embed_text(&self, prompt: &str) -> Result<Option<Cow<'_, EmbeddingVector>>> {
            Ok(self.prompts.get(prompt).map(Cow::Borrowed))
        }
    }

    fn seen(names: &[&str]) -> Vec<Label> {
        names.iter().map(|n| Label::seen(*n).unwrap()).collect()
    }

    fn space(s: &[&str], g: &[&str]) -> LabelSpace {
        LabelSpace::new(seen(s), CandidateSet::from_names(g).unwrap(), true).unwrap()
    }

    fn score_with(cosines: &[(&str, f64)], s: &[&str], g: &[&str], temperature: f64) -> ScoreResult {
        let config = ScoringConfig {
            temperature,
            ..Default::default()
        };
        let b = CosineBackend::new(&config.template, cosines);
        open_set_score("img", &b.image, &space(s, g), &b, &config).unwrap()
    }

    #[test]
    fn empty_generated_scores_zero() {
        let r = score_with(&[("a", 0.3), ("b", 0.1)], &["a", "b"], &[], 100.0);
        assert_eq!(r.score, 0.0);
        assert_eq!(r.diagnostics, vec![Diagnostic::EmptyCandidates]);
    }

    #[test]
    fn equal_cosines_split_mass_evenly() {
        let c = [("a", 0.4), ("b", 0.4), ("c", 0.4), ("d", 0.4)];
        let r = score_with(&c, &["a", "b"], &["c", "d"], 100.0);
        assert_eq!(r.score, 0.5);
    }

    #[test]
    fn three_label_hand_oracle() {
        // e^9 / (e^2 + e^1 + e^9)
        let r = score_with(&[("a", 0.2), ("b", 0.1), ("c", 0.9)], &["a", "b"], &["c"], 10.0);
        assert!((r.score - 0.998_754_209_336_791_4).abs() < 1e-5, "{}", r.score);
        assert_eq!(r.predicted_seen.name, "a");
        // seen-only softmax: e^2 / (e^2 + e^1)
        let expected_msp = 1.0 - 2f64.exp() / (2f64.exp() + 1f64.exp());
        assert!((r.msp_score - expected_msp).abs() < 1e-6);
    }

    #[test]
    fn predicted_seen_ties_go_to_first() {
        let r = score_with(&[("a", 0.5), ("b", 0.5)], &["a", "b"], &[], 100.0);
        assert_eq!(r.predicted_seen.name, "a");
        let r = score_with(&[("a", 0.5), ("b", 0.5)], &["b", "a"], &[], 100.0);
        assert_eq!(r.predicted_seen.name, "b");
    }

    #[test]
    fn missing_embeddings() {
        let config = ScoringConfig::default();
        let b = CosineBackend::new(&config.template, &[("a", 0.5)]);
        let err = open_set_score("img", &b.image, &space(&["a"], &["zzz"]), &b, &config).unwrap_err();
        assert!(matches!(err, Error::MissingTextEmbedding { label, .. } if label == "zzz"));
        let err = open_set_score("img", &b.image, &space(&["q"], &[]), &b, &config).unwrap_err();
        assert!(matches!(err, Error::MissingTextEmbedding { label, .. } if label == "q"));

        let relaxed = ScoringConfig {
            skip_missing_candidates: true,
            ..Default::default()
        };
        let r = open_set_score("img", &b.image, &space(&["a"], &["zzz"]), &b, &relaxed).unwrap();
        assert_eq!(r.score, 0.0);
        assert_eq!(r.distribution.len(), 1);
        assert!(matches!(r.diagnostics[0], Diagnostic::SkippedCandidate { .. }));
    }

    #[test]
    fn label_space_rules() {
        assert!(matches!(
            LabelSpace::new(vec![], CandidateSet::default(), true),
            Err(Error::EmptySeen)
        ));
        let collide = CandidateSet::from_names(&["Cat"]).unwrap();
        assert!(LabelSpace::new(seen(&["cat"]), collide.clone(), true).is_err());
        assert!(LabelSpace::new(seen(&["cat"]), collide, false).is_ok());
        assert!(LabelSpace::new(seen(&["cat", "CAT"]), CandidateSet::default(), true).is_err());
    }

    #[test]
    fn contributors() {
        let uniform4 = score_with(
            &[("a", 0.1), ("b", 0.1), ("c", 0.1), ("d", 0.1)],
            &["a", "b"],
            &["c", "d"],
            1.0,
        );
        assert_eq!(top_contributors(&uniform4, 0.1).len(), 4);

        let names: Vec<String> = (0..20).map(|i| format!("l{i}")).collect();
        let cos: Vec<(&str, f64)> = names.iter().map(|n| (n.as_str(), 0.2)).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let uniform20 = score_with(&cos, &refs[..3], &refs[3..], 1.0);
        assert!(top_contributors(&uniform20, 0.1).is_empty());

        let mut manual = uniform4.clone();
        manual.distribution = SoftmaxDistribution::new(
            vec![
                Label::seen("a").unwrap(),
                Label::seen("b").unwrap(),
                Label::generated("c").unwrap(),
            ],
            vec![0.2, 0.7, 0.1],
        )
        .unwrap();
        let top = top_contributors(&manual, 0.1);
        let got: Vec<(&str, f64)> = top.iter().map(|e| (e.label.name.as_str(), e.probability)).collect();
        assert_eq!(got, [("b", 0.7), ("a", 0.2)]);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
        (
            proptest::collection::vec(-1.0f64..1.0, 1..8),
            proptest::collection::vec(-1.0f64..1.0, 0..12),
            prop_oneof![Just(100.0), 1.0f64..150.0],
        )
    }

    fn build(seen_cos: &[f64], gen_cos: &[f64], temperature: f64) -> ScoreResult {
        let s: Vec<String> = (0..seen_cos.len()).map(|i| format!("s{i}")).collect();
        let g: Vec<String> = (0..gen_cos.len()).map(|i| format!("g{i}")).collect();
        let mut cos: Vec<(&str, f64)> = s.iter().map(String::as_str).zip(seen_cos.iter().copied()).collect();
        cos.extend(g.iter().map(String::as_str).zip(gen_cos.iter().copied()));
        let sr: Vec<&str> = s.iter().map(String::as_str).collect();
        let gr: Vec<&str> = g.iter().map(String::as_str).collect();
        score_with(&cos, &sr, &gr, temperature)
    }

    proptest! {
        #[test]
        fn score_identity((s, g, t) in instance()) {
            let r = build(&s, &g, t);
            prop_assert!((r.score - (1.0 - r.seen_mass())).abs() < 1e-6);
            let gen_mass: f64 = r.distribution.entries.iter()
                .filter(|e| e.label.kind == LabelKind::Generated)
                .map(|e| e.probability).sum();
            prop_assert!((r.score - gen_mass).abs() < 1e-6);
            prop_assert!((0.0..=1.0).contains(&r.score));
            prop_assert!((0.0..=1.0).contains(&r.msp_score));
            if g.is_empty() {
                prop_assert_eq!(r.score, 0.0);
            }
        }

        #[test]
        fn msp_ignores_generated((s, g, t) in instance(), extra in proptest::collection::vec(-1.0f64..1.0, 0..5)) {
            let a = build(&s, &g, t);
            let b = build(&s, &extra, t);
            prop_assert_eq!(a.msp_score, b.msp_score);
            prop_assert_eq!(a.predicted_seen, b.predicted_seen);
        }

        #[test]
        fn reordering_within_groups((s, g, t) in instance()) {
            let a = build(&s, &g, t);
            let mut s2 = s.clone();
            s2.reverse();
            let mut g2 = g.clone();
            g2.reverse();
            let b = build(&s2, &g2, t);
            prop_assert!((a.score - b.score).abs() < 1e-9);
            prop_assert!((a.msp_score - b.msp_score).abs() < 1e-9);
        }

        #[test]
        fn antipodal_candidate_is_negligible((s, g, _t) in instance()) {
            // Only negligible when some other label sits well above -1.
            prop_assume!(s.iter().chain(&g).any(|&c| c > -0.8));
            let a = build(&s, &g, 100.0);
            let mut g2 = g.clone();
            g2.push(-1.0);
            let b = build(&s, &g2, 100.0);
            prop_assert!((a.score - b.score).abs() < 1e-6);
        }

        #[test]
        fn raising_a_candidate_never_lowers_score((s, g, t) in instance(), bump in 0.0f64..1.0, pick in any::<prop::sample::Index>()) {
            prop_assume!(!g.is_empty());
            let i = pick.index(g.len());
            let a = build(&s, &g, t);
            let mut g2 = g.clone();
            g2[i] = (g2[i] + bump).min(1.0);
            let b = build(&s, &g2, t);
            prop_assert!(b.score >= a.score - 1e-12);
        }
    }
}
