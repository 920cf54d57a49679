//! Deterministic synthetic embeddings, decoder outputs and splits.
//!
//! Every vector is a pure function of `(key, dim, salt)`:
//!
//! 1. `h = FNV-1a-64(key bytes)`, `state = h ^ salt`
//! 2. uniforms from splitmix64, `u = z / 2^64` (`2^-64` when `z == 0`)
//! 3. Box-Muller on consecutive pairs `(u1, u2)`, emitting `r cos t` then `r sin t`
//! 4. L2 normalization in `f64`, stored as `f32`
//!
//! The construction is simple enough to reproduce in any language, which is
//! what the golden fixture in `tests/fixtures` checks.

use std::borrow::Cow;
use std::collections::{HashMap, HashSet};
use std::f64::consts::TAU;

use crate::candidates::{DecoderOutput, PositionTopK, StopList};
use crate::error::{Error, Result};
use crate::label::PromptTemplate;
use crate::store::backend::EmbeddingBackend;
use crate::store::logits::LogitsStore;
use crate::store::split::{cifar10_classes, SplitSpec, TestImage};
use crate::vector::EmbeddingVector;

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET_BASIS, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(state: u64) -> Self {
        Self { state }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `(0, 1]`; zero is replaced by `2^-64`.
    pub fn next_uniform(&mut self) -> f64 {
        const TWO_POW_64: f64 = 18_446_744_073_709_551_616.0;
        match self.next_u64() {
            0 => 1.0 / TWO_POW_64,
            z => z as f64 / TWO_POW_64,
        }
    }

    /// Uniform integer in `0..n` (`n > 0`).
    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }
}

fn gaussian_fill(rng: &mut SplitMix64, dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(dim);
    while out.len() < dim {
        let u1 = rng.next_uniform();
        let u2 = rng.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = TAU * u2;
        out.push(r * theta.cos());
        if out.len() < dim {
            out.push(r * theta.sin());
        }
    }
    out
}

fn raw_synthetic(key: &str, dim: usize, seed_salt: u64) -> Vec<f64> {
    let mut rng = SplitMix64::new(fnv1a64(key.as_bytes()) ^ seed_salt);
    gaussian_fill(&mut rng, dim)
}

fn unit_from_raw(raw: &[f64]) -> Option<EmbeddingVector> {
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return None;
    }
    let values = raw.iter().map(|x| (x / norm) as f32).collect();
    EmbeddingVector::from_unit(values).ok()
}

/// Deterministic pseudo-random unit vector for `key`.
///
/// # Panics
///
/// If `dim < 2`.
pub fn synthetic_embed(key: &str, dim: usize, seed_salt: u64) -> EmbeddingVector {
    assert!(dim >= 2, "synthetic embeddings need dim >= 2, got {dim}");
    // Box-Muller output has norm > 0 because u1 <= 1 gives r >= 0 and at
    // least one of cos/sin is nonzero; only u1 == 1 exactly yields r == 0.
    let mut salt = seed_salt;
    loop {
        if let Some(v) = unit_from_raw(&raw_synthetic(key, dim, salt)) {
            return v;
        }
        salt = salt.wrapping_add(1);
    }
}

/// Image embedding blended between a class prompt and per-image noise:
/// `normalize((1 - eps) * class_prompt + eps * noise)`.
pub fn aligned_synthetic_image(
    class_name: &str,
    image_id: &str,
    epsilon: f64,
    template: &PromptTemplate,
    dim: usize,
    salt: u64,
) -> Result<EmbeddingVector> {
    let class = synthetic_embed(&template.render(class_name), dim, salt);
    blend(&class, image_id, epsilon, dim, salt)
}

fn blend(class: &EmbeddingVector, image_id: &str, epsilon: f64, dim: usize, salt: u64) -> Result<EmbeddingVector> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must be in [0, 1], got {epsilon}"
        )));
    }
    if epsilon == 0.0 {
        return Ok(class.clone());
    }
    let noise_key = format!("{image_id}#noise");
    let mut noise_salt = salt;
    // The blend only cancels if the noise is exactly opposite the class
    // vector; re-salting keeps the result deterministic.
    for _ in 0..64 {
        let noise = synthetic_embed(&noise_key, dim, noise_salt);
        let mixed: Vec<f64> = class
            .values()
            .iter()
            .zip(noise.values())
            .map(|(&c, &n)| (1.0 - epsilon) * f64::from(c) + epsilon * f64::from(n))
            .collect();
        match EmbeddingVector::normalize(&mixed) {
            Ok(v) => return Ok(v),
            Err(Error::ZeroVector) => noise_salt = noise_salt.wrapping_add(1),
            Err(e) => return Err(e),
        }
    }
    Err(Error::ZeroVector)
}

/// Backend that synthesizes prompt vectors with [`synthetic_embed`] and image
/// vectors with [`aligned_synthetic_image`] from a known image-to-class map.
#[derive(Debug, Clone)]
pub struct SyntheticBackend {
    dim: usize,
    salt: u64,
    epsilon: f64,
    template: PromptTemplate,
    image_classes: HashMap<String, String>,
    text_cache: HashMap<String, EmbeddingVector>,
}

impl SyntheticBackend {
    pub fn new(dim: usize, salt: u64, epsilon: f64, template: PromptTemplate) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidConfig(format!(
                "synthetic dim must be at least 2, got {dim}"
            )));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be in [0, 1], got {epsilon}"
            )));
        }
        Ok(Self {
            dim,
            salt,
            epsilon,
            template,
            image_classes: HashMap::new(),
            text_cache: HashMap::new(),
        })
    }

    pub fn add_image(&mut self, image_id: impl Into<String>, class: impl Into<String>) {
        self.image_classes.insert(image_id.into(), class.into());
    }

    /// Registers every image of `split`.
    pub fn add_split(&mut self, split: &SplitSpec) {
        for image in &split.images {
            self.add_image(image.id.clone(), image.class.clone());
        }
    }

    /// Precomputes prompt vectors for `words`. Lookups of other prompts still
    /// work; they are just computed on every call.
    pub fn warm<S: AsRef<str>>(&mut self, words: impl IntoIterator<Item = S>) {
        for word in words {
            let prompt = self.template.render(word.as_ref());
            if !self.text_cache.contains_key(&prompt) {
                let v = synthetic_embed(&prompt, self.dim, self.salt);
                self.text_cache.insert(prompt, v);
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn text(&self, prompt: &str) -> Cow<'_, EmbeddingVector> {
        match self.text_cache.get(prompt) {
            Some(v) => Cow::Borrowed(v),
            None => Cow::Owned(synthetic_embed(prompt, self.dim, self.salt)),
        }
    }
}

impl EmbeddingBackend for SyntheticBackend {
    fn embed_image(&self, image_id: &str) -> Result<Cow<'_, EmbeddingVector>> {
        let class = self
            .image_classes
            .get(image_id)
            .ok_or_else(|| Error::MissingImage(image_id.to_owned()))?;
        let class_vec = self.text(&self.template.render(class));
        blend(&class_vec, image_id, self.epsilon, self.dim, self.salt).map(Cow::Owned)
    }

    fn embed_text(&self, prompt: &str) -> Result<Option<Cow<'_, EmbeddingVector>>> {
        Ok(Some(self.text(prompt)))
    }
}

const CAPTION_VOCAB: &str = include_str!("../../data/caption_vocab.txt");

/// Caption-style words used as decoder distractors.
pub fn caption_vocabulary() -> Vec<&'static str> {
    CAPTION_VOCAB.lines().filter(|l| !l.starts_with('#')).collect()
}

pub const FUNCTION_WORDS: [&str; 8] = ["a", "an", "the", "of", "in", "on", "with", "is"];

/// Shape of synthetic decoder outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticDecoderShape {
    pub positions: usize,
    pub stored_k: usize,
}

impl Default for SyntheticDecoderShape {
    fn default() -> Self {
        Self {
            positions: 4,
            stored_k: 35,
        }
    }
}

/// Synthetic decoder output for one image of class `class_name`.
///
/// Each position holds `stored_k` distinct words drawn from function words
/// and the caption vocabulary. The class word itself is the top entry of the
/// second position (the first when there is only one), mimicking a decoder
/// that names the object it sees.
pub fn synthetic_decoder_output(
    image_id: &str,
    class_name: &str,
    salt: u64,
    shape: SyntheticDecoderShape,
) -> Result<DecoderOutput> {
    let mut pool: Vec<&str> = FUNCTION_WORDS.to_vec();
    pool.extend(caption_vocabulary());
    pool.retain(|w| !w.eq_ignore_ascii_case(class_name));
    if shape.positions == 0 || shape.stored_k == 0 || shape.stored_k > pool.len() {
        return Err(Error::InvalidConfig(format!(
            "synthetic decoder shape {shape:?} is not supported (pool has {} words)",
            pool.len()
        )));
    }
    let mut rng = SplitMix64::new(fnv1a64(format!("{image_id}#decoder").as_bytes()) ^ salt);
    let class_position = usize::from(shape.positions > 1);
    let mut positions = Vec::with_capacity(shape.positions);
    for p in 0..shape.positions {
        // partial Fisher-Yates draw of stored_k distinct words
        let mut words = pool.clone();
        for i in 0..shape.stored_k {
            let j = i + rng.below(words.len() - i);
            words.swap(i, j);
        }
        let mut entries: Vec<(String, f64)> = words[..shape.stored_k]
            .iter()
            .enumerate()
            .map(|(rank, w)| (w.to_string(), -0.15 * rank as f64 - 0.1 * rng.next_uniform() - 0.5))
            .collect();
        if p == class_position {
            entries.pop();
            entries.push((class_name.to_owned(), -0.05));
        }
        let position = PositionTopK::from_unsorted(entries).map_err(|reason| Error::InvalidDecoderOutput {
            image_id: image_id.to_owned(),
            reason,
        })?;
        positions.push(position);
    }
    DecoderOutput::new(image_id, shape.stored_k, positions)
}

/// A self-contained synthetic benchmark: splits, backend and decoder outputs.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub splits: Vec<SplitSpec>,
    pub backend: SyntheticBackend,
    pub logits: LogitsStore,
}

#[derive(Debug, Clone)]
pub struct SyntheticWorldConfig {
    pub dim: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub images_per_class: usize,
    pub num_splits: usize,
    pub num_seen: usize,
    pub classes: Vec<String>,
    pub template: PromptTemplate,
    pub decoder: SyntheticDecoderShape,
}

impl Default for SyntheticWorldConfig {
    /// CIFAR10-style: 10 classes, 6 seen / 4 unseen, 5 splits, 50 images per class.
    fn default() -> Self {
        Self {
            dim: 512,
            seed: 42,
            epsilon: 0.1,
            images_per_class: 50,
            num_splits: 5,
            num_seen: 6,
            classes: cifar10_classes(),
            template: PromptTemplate::default(),
            decoder: SyntheticDecoderShape::default(),
        }
    }
}

pub fn synthetic_image_id(class: &str, index: usize) -> String {
    format!("{class}_{index:03}")
}

/// Seeded choice of seen classes for each split; every split shares the same
/// image pool (all classes, `images_per_class` each).
pub fn synthetic_splits(config: &SyntheticWorldConfig) -> Result<Vec<SplitSpec>> {
    let n = config.classes.len();
    if config.num_seen == 0 || config.num_seen >= n {
        return Err(Error::InvalidConfig(format!(
            "need 0 < num_seen < {n}, got {}",
            config.num_seen
        )));
    }
    let images: Vec<TestImage> = config
        .classes
        .iter()
        .flat_map(|class| {
            (0..config.images_per_class).map(move |i| TestImage {
                id: synthetic_image_id(class, i),
                class: class.clone(),
            })
        })
        .collect();
    (0..config.num_splits)
        .map(|s| {
            let name = format!("synthetic-{s}");
            let mut rng = SplitMix64::new(fnv1a64(name.as_bytes()) ^ config.seed);
            let mut order: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                order.swap(i, rng.below(i + 1));
            }
            let mut seen_idx = order[..config.num_seen].to_vec();
            seen_idx.sort_unstable();
            let seen_set: HashSet<usize> = seen_idx.iter().copied().collect();
            let split = SplitSpec {
                name,
                seen: seen_idx.iter().map(|&i| config.classes[i].clone()).collect(),
                unseen: (0..n)
                    .filter(|i| !seen_set.contains(i))
                    .map(|i| config.classes[i].clone())
                    .collect(),
                images: images.clone(),
            };
            split.validate()?;
            Ok(split)
        })
        .collect()
}

impl SyntheticWorld {
    pub fn build(config: &SyntheticWorldConfig) -> Result<Self> {
        let splits = synthetic_splits(config)?;
        Self::from_splits(config, splits)
    }

    /// Synthesizes embeddings and decoder outputs for the images of `splits`.
    pub fn from_splits(config: &SyntheticWorldConfig, splits: Vec<SplitSpec>) -> Result<Self> {
        let mut backend = SyntheticBackend::new(config.dim, config.seed, config.epsilon, config.template.clone())?;
        let mut logits = LogitsStore::new();
        let mut classes: Vec<&str> = Vec::new();
        for split in &splits {
            backend.add_split(split);
            classes.extend(split.seen.iter().chain(&split.unseen).map(String::as_str));
            for image in &split.images {
                if logits.get(&image.id).is_none() {
                    logits.insert(synthetic_decoder_output(
                        &image.id,
                        &image.class,
                        config.seed,
                        config.decoder,
                    )?)?;
                }
            }
        }
        backend.warm(classes);
        backend.warm(caption_vocabulary());
        backend.warm(FUNCTION_WORDS);
        Ok(Self {
            splits,
            backend,
            logits,
        })
    }
}

/// Stop list matching the function words the synthetic decoder emits.
pub fn synthetic_function_words() -> StopList {
    StopList::new(FUNCTION_WORDS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::cosine;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn splitmix_reference_values() {
        // Reference outputs for seed 0 from the original splitmix64.c.
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xe220a8397b1dcdaf);
        assert_eq!(rng.next_u64(), 0x6e789e6aa1b965f4);
    }

    #[test]
    fn deterministic() {
        let a = synthetic_embed("dog", 64, 7);
        let b = synthetic_embed("dog", 64, 7);
        assert_eq!(a, b);
        assert_ne!(a, synthetic_embed("dog", 64, 8));
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert_eq!(synthetic_embed("x", 7, 0).dim(), 7);
    }

    #[test]
    fn independent_keys_nearly_orthogonal() {
        let a = synthetic_embed("a", 512, 42);
        let b = synthetic_embed("b", 512, 42);
        assert!(cosine(&a, &b).unwrap().abs() < 0.2);
    }

    #[test]
    fn aligned_blend_extremes() {
        let t = PromptTemplate::default();
        let class = synthetic_embed("This is a photo of a dog.", 512, 42);
        let exact = aligned_synthetic_image("dog", "dog_000", 0.0, &t, 512, 42).unwrap();
        assert_eq!(exact, class);

        let noise = aligned_synthetic_image("dog", "dog_000", 1.0, &t, 512, 42).unwrap();
        assert!(cosine(&noise, &class).unwrap().abs() < 0.2);
        let pure = synthetic_embed("dog_000#noise", 512, 42);
        assert!(cosine(&noise, &pure).unwrap() > 1.0 - 1e-6);

        let near = aligned_synthetic_image("dog", "dog_000", 0.1, &t, 512, 42).unwrap();
        assert!(cosine(&near, &class).unwrap() > 0.9);
        assert!(aligned_synthetic_image("dog", "dog_000", 1.5, &t, 512, 42).is_err());
    }

    #[test]
    fn backend_matches_free_functions() {
        let t = PromptTemplate::default();
        let mut b = SyntheticBackend::new(32, 3, 0.2, t.clone()).unwrap();
        b.add_image("img", "cat");
        b.warm(["cat"]);
        let via_backend = b.embed_image("img").unwrap().into_owned();
        let direct = aligned_synthetic_image("cat", "img", 0.2, &t, 32, 3).unwrap();
        assert_eq!(via_backend, direct);
        let cold = b
            .embed_text("This is a photo of a boat.")
            .unwrap()
            .unwrap()
            .into_owned();
        assert_eq!(cold, synthetic_embed("This is a photo of a boat.", 32, 3));
        assert!(matches!(b.embed_image("other"), Err(Error::MissingImage(_))));
    }

    #[test]
    fn decoder_output_contains_class_word() {
        let d = synthetic_decoder_output("boat_001", "boat", 42, SyntheticDecoderShape::default()).unwrap();
        assert_eq!(d.stored_k(), 35);
        assert_eq!(d.positions().len(), 4);
        assert!(d.positions().iter().all(|p| p.len() == 35));
        assert_eq!(d.positions()[1].entries()[0].0, "boat");
        assert_eq!(
            d,
            synthetic_decoder_output("boat_001", "boat", 42, SyntheticDecoderShape::default()).unwrap()
        );
    }

    #[test]
    fn splits_are_seeded_and_valid() {
        let cfg = SyntheticWorldConfig {
            images_per_class: 2,
            ..Default::default()
        };
        let a = synthetic_splits(&cfg).unwrap();
        assert_eq!(a.len(), 5);
        for s in &a {
            assert_eq!(s.seen.len(), 6);
            assert_eq!(s.unseen.len(), 4);
            assert_eq!(s.images.len(), 20);
        }
        assert_eq!(a, synthetic_splits(&cfg).unwrap());
        let distinct: HashSet<_> = a.iter().map(|s| s.seen.clone()).collect();
        assert!(distinct.len() > 1);
    }
}
