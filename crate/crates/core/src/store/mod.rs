//! Persistence formats and embedding backends.

pub mod backend;
pub mod embeddings;
pub mod logits;
pub mod split;
pub mod synthetic;

pub use embeddings::{read_store, write_store, EmbeddingStore};
pub use logits::{read_logits, write_logits, LogitsStore};
pub use split::{read_split, write_split, SplitSpec, TestImage};
