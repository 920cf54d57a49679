//! JSON Lines file of per-image decoder top-k lists, one object per line:
//! `{"image_id": "...", "stored_k": 35, "positions": [[["word", -0.1], ...], ...]}`.

use std::fs;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;

use crate::candidates::DecoderOutput;
use crate::error::{Error, Result};

/// Decoder outputs keyed by image id, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LogitsStore {
    outputs: IndexMap<String, DecoderOutput>,
}

impl LogitsStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, output: DecoderOutput) -> Result<()> {
        let id = output.image_id().to_owned();
        if self.outputs.contains_key(&id) {
            return Err(Error::DuplicateKey(id));
        }
        self.outputs.insert(id, output);
        Ok(())
    }

    pub fn get(&self, image_id: &str) -> Option<&DecoderOutput> {
        self.outputs.get(image_id)
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DecoderOutput> {
        self.outputs.values()
    }

    /// Parses JSON Lines. Blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut store = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let output: DecoderOutput = serde_json::from_str(line).map_err(|source| Error::Json {
                context: format!("logits line {}", i + 1),
                source,
            })?;
            store.insert(output)?;
        }
        Ok(store)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = Vec::new();
        for output in self.outputs.values() {
            serde_json::to_writer(&mut out, output).map_err(|source| Error::Json {
                context: format!("serializing decoder output {:?}", output.image_id()),
                source,
            })?;
            out.write_all(b"\n").expect("writing to a Vec cannot fail");
        }
        Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
    }
}

pub fn read_logits(path: impl AsRef<Path>) -> Result<LogitsStore> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LogitsStore::parse(&text)
}

pub fn write_logits(store: &LogitsStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, store.to_jsonl()?).map_err(|e| Error::io(path, e))
}
