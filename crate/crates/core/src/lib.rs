//! Zero-shot open-set detection.
//!
//! Given image embeddings, label-prompt embeddings and per-position decoder
//! vocabularies, this crate extracts candidate unseen labels for each image,
//! scores how much softmax mass moves from the seen labels onto those
//! candidates, and evaluates the resulting detector with AUROC over benchmark
//! splits.
//!
//! Module map:
//!
//! - [`vector`], [`prob`], [`label`], [`config`]: shared types and math
//! - [`candidates`]: candidate unseen labels and the teacher-forcing loss
//! - [`scoring`]: open-set score, MSP baseline, top contributors
//! - [`eval`]: openness, AUROC, aggregation, histograms, split evaluation
//! - [`store`]: file formats, embedding backends, synthetic data

pub mod candidates;
pub mod config;
pub mod error;
pub mod eval;
pub mod label;
pub mod prob;
pub mod scoring;
pub mod store;
pub mod vector;

pub use candidates::{extract_candidates, teacher_forcing_loss, CandidateSet, DecoderOutput, PositionTopK, StopList};
pub use config::ScoringConfig;
pub use error::{Error, ErrorClass, Result};
pub use eval::{aggregate, auroc, evaluate, histogram, openness, EvalReport, ImageOutcome, SplitReport};
pub use label::{render_prompt, Label, LabelKind, PromptTemplate};
pub use prob::{softmax, SoftmaxDistribution};
pub use scoring::{open_set_score, run_inference, top_contributors, LabelSpace, ScoreResult};
pub use store::backend::{EmbeddingBackend, FileBackend};
pub use vector::{cosine, EmbeddingVector};
