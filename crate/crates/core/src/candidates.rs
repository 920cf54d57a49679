//! Candidate unseen labels from per-position decoder vocabularies.
//!
//! A decoder run over an image yields, for each generated position, the
//! highest-probability vocabulary words. The union of the top `k` words at
//! every position (after stop-word and seen-label filtering) forms the set
//! of candidate unseen labels used by the scorer.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::config::ScoringConfig;
use crate::error::{Error, Result};
use crate::label::{fold_case, Label, LabelKind};
use crate::prob::log_sum_exp;

/// Order of entries within one position: log-probability descending, then
/// the lowercase word in byte order, then the raw word.
pub fn entry_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.total_cmp(&a.1)
        .then_with(|| fold_case(&a.0).cmp(&fold_case(&b.0)))
        .then_with(|| a.0.cmp(&b.0))
}

/// Ranked `(word, logprob)` pairs for one decoder position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PositionTopK {
    entries: Vec<(String, f64)>,
}

impl PositionTopK {
    /// Accepts entries that are already in canonical order. Unsorted input
    /// is rejected rather than repaired.
    pub fn new(entries: Vec<(String, f64)>) -> std::result::Result<Self, String> {
        let mut words = HashSet::with_capacity(entries.len());
        for (word, logprob) in &entries {
            if word.is_empty() {
                return Err("empty word".into());
            }
            if logprob.is_nan() {
                return Err(format!("NaN log-probability for {word:?}"));
            }
            if !words.insert(word.as_str()) {
                return Err(format!("duplicate word {word:?}"));
            }
        }
        if let Some(w) = entries.windows(2).find(|w| entry_order(&w[0], &w[1]) != Ordering::Less) {
            return Err(format!(
                "entries not sorted by logprob descending then word: {:?} before {:?}",
                w[0], w[1]
            ));
        }
        Ok(Self { entries })
    }

    /// Sorts into canonical order, then validates.
    pub fn from_unsorted(mut entries: Vec<(String, f64)>) -> std::result::Result<Self, String> {
        entries.sort_by(entry_order);
        Self::new(entries)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Per-image decoder output: one [`PositionTopK`] per generated position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDecoderOutput", into = "RawDecoderOutput")]
pub struct DecoderOutput {
    image_id: String,
    stored_k: usize,
    positions: Vec<PositionTopK>,
}

#[derive(Serialize, Deserialize)]
struct RawDecoderOutput {
    image_id: String,
    stored_k: usize,
    positions: Vec<Vec<(String, f64)>>,
}

impl TryFrom<RawDecoderOutput> for DecoderOutput {
    type Error = Error;

    fn try_from(raw: RawDecoderOutput) -> Result<Self> {
        let image_id = raw.image_id;
        let positions = raw
            .positions
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                PositionTopK::new(p).map_err(|reason| Error::InvalidDecoderOutput {
                    image_id: image_id.clone(),
                    reason: format!("position {i}: {reason}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DecoderOutput::new(image_id, raw.stored_k, positions)
    }
}

impl From<DecoderOutput> for RawDecoderOutput {
    fn from(d: DecoderOutput) -> Self {
        Self {
            image_id: d.image_id,
            stored_k: d.stored_k,
            positions: d.positions.into_iter().map(|p| p.entries).collect(),
        }
    }
}

impl DecoderOutput {
    pub fn new(image_id: impl Into<String>, stored_k: usize, positions: Vec<PositionTopK>) -> Result<Self> {
        let image_id = image_id.into();
        let invalid = |reason: String| Error::InvalidDecoderOutput {
            image_id: image_id.clone(),
            reason,
        };
        if stored_k == 0 {
            return Err(invalid("stored_k must be at least 1".into()));
        }
        if positions.is_empty() {
            return Err(invalid("no positions".into()));
        }
        if let Some((i, p)) = positions.iter().enumerate().find(|(_, p)| p.len() > stored_k) {
            return Err(invalid(format!(
                "position {i} has {} entries, more than stored_k={stored_k}",
                p.len()
            )));
        }
        Ok(Self {
            image_id,
            stored_k,
            positions,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn stored_k(&self) -> usize {
        self.stored_k
    }

    pub fn positions(&self) -> &[PositionTopK] {
        &self.positions
    }
}

/// Lowercase function words dropped from candidate sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StopList {
    words: HashSet<String>,
}

const ENGLISH_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");

impl StopList {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            words: words
                .into_iter()
                .map(|w| fold_case(w.as_ref().trim()))
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    /// The bundled English list.
    pub fn english() -> Self {
        Self::new(ENGLISH_STOPWORDS.lines().filter(|l| !l.starts_with('#')))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&fold_case(word))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub label: Label,
    /// Highest log-probability of this word (any casing) within the top `k`
    /// of any position.
    pub best_logprob: f64,
}

/// Generated labels in scan order: positions left to right, ranks high to low.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateSet {
    candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.candidates.iter().map(|c| &c.label)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Builds a set from explicit names, skipping case-insensitive repeats.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut index = HashMap::new();
        let mut candidates = Vec::new();
        for name in names {
            let label = Label::generated(name.as_ref())?;
            if index.insert(label.fold(), candidates.len()).is_none() {
                candidates.push(Candidate {
                    label,
                    best_logprob: 0.0,
                });
            }
        }
        Ok(Self { candidates })
    }

    /// Keeps only candidates accepted by `keep`, preserving order.
    pub fn retain(&mut self, keep: impl FnMut(&Candidate) -> bool) {
        self.candidates.retain(keep);
    }
}

/// Union of the top `k` words of every position, filtered and deduplicated.
pub fn extract_candidates(
    decoded: &DecoderOutput,
    config: &ScoringConfig,
    stoplist: &StopList,
    seen: &[Label],
) -> Result<CandidateSet> {
    config.validate()?;
    if config.k > decoded.stored_k {
        return Err(Error::KTooLarge {
            image_id: decoded.image_id.clone(),
            k: config.k,
            stored_k: decoded.stored_k,
        });
    }
    if let Some(l) = seen.iter().find(|l| l.kind != LabelKind::Seen) {
        return Err(Error::InvalidLabel(format!(
            "{:?} passed as a seen label but has kind {:?}",
            l.name, l.kind
        )));
    }
    let seen_folded: HashSet<String> = if config.dedup_against_seen {
        seen.iter().map(Label::fold).collect()
    } else {
        HashSet::new()
    };

    let mut index: HashMap<String, usize> = HashMap::new();
    let mut candidates: Vec<Candidate> = Vec::new();
    for position in &decoded.positions {
        for (word, logprob) in position.entries.iter().take(config.k) {
            let folded = fold_case(word);
            if config.filter_stopwords && stoplist.contains(&folded) {
                continue;
            }
            if seen_folded.contains(&folded) {
                continue;
            }
            match index.get(&folded) {
                Some(&i) => {
                    let best = &mut candidates[i].best_logprob;
                    *best = best.max(*logprob);
                }
                None => {
                    index.insert(folded, candidates.len());
                    candidates.push(Candidate {
                        label: Label::generated(word.clone())?,
                        best_logprob: *logprob,
                    });
                }
            }
        }
    }
    Ok(CandidateSet { candidates })
}

/// Teacher-forced sequence cross-entropy: `-sum_t log softmax(logits_t)[target_t]`.
///
/// `logits` is a `T x V` matrix given as rows; `targets` holds one vocabulary
/// index per row.
pub fn teacher_forcing_loss<R: AsRef<[f64]>>(logits: &[R], targets: &[usize]) -> Result<f64> {
    if logits.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} logit rows but {} targets",
            logits.len(),
            targets.len()
        )));
    }
    let vocab = logits.first().map_or(0, |r| r.as_ref().len());
    let mut loss = 0.0;
    for (position, (row, &target)) in logits.iter().zip(targets).enumerate() {
        let row = row.as_ref();
        if row.len() != vocab {
            return Err(Error::ShapeMismatch(format!(
                "row {position} has {} columns, expected {vocab}",
                row.len()
            )));
        }
        if target >= vocab {
            return Err(Error::IndexOutOfRange {
                position,
                index: target,
                vocab,
            });
        }
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        // lse >= row[target], so each term is non-negative up to rounding.
        loss += (log_sum_exp(row) - row[target]).max(0.0);
    }
    Ok(loss)
}
