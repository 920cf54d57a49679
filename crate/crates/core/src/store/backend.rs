use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::store::embeddings::EmbeddingStore;
use crate::vector::EmbeddingVector;

/// Source of image and prompt embeddings.
///
/// Implementations must be deterministic: the same query always yields the
/// same vector. Text lookups are keyed by the full rendered prompt.
pub trait EmbeddingBackend: Send + Sync {
    fn embed_image(&self, image_id: &str) -> Result<Cow<'_, EmbeddingVector>>;

    /// `Ok(None)` when the backend has no embedding for `prompt`.
    fn embed_text(&self, prompt: &str) -> Result<Option<Cow<'_, EmbeddingVector>>>;
}

/// Backend over two loaded embedding stores.
#[derive(Debug, Clone)]
pub struct FileBackend {
    images: EmbeddingStore,
    texts: EmbeddingStore,
}

impl FileBackend {
    pub fn new(images: EmbeddingStore, texts: EmbeddingStore) -> Result<Self> {
        if images.dim() != texts.dim() {
            return Err(Error::DimMismatch {
                expected: images.dim(),
                found: texts.dim(),
            });
        }
        Ok(Self { images, texts })
    }

    pub fn images(&self) -> &EmbeddingStore {
        &self.images
    }

    pub fn texts(&self) -> &EmbeddingStore {
        &self.texts
    }
}

impl EmbeddingBackend for FileBackend {
    fn embed_image(&self, image_id: &str) -> Result<Cow<'_, EmbeddingVector>> {
        self.images
            .get(image_id)
            .map(Cow::Borrowed)
            .ok_or_else(|| Error::MissingImage(image_id.to_owned()))
    }

    fn embed_text(&self, prompt: &str) -> Result<Option<Cow<'_, EmbeddingVector>>> {
        Ok(self.texts.get(prompt).map(Cow::Borrowed))
    }
}
