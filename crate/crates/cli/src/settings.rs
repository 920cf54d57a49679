//! Resolution of command-line flags and the optional JSON config file into
//! one set of settings. Flags win over the file, the file wins over defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use zosd_core::eval::SyntheticEcho;
use zosd_core::store::synthetic::{SyntheticWorld, SyntheticWorldConfig};
use zosd_core::store::{read_logits, read_split, read_store, LogitsStore, SplitSpec};
use zosd_core::{EmbeddingBackend, FileBackend, PromptTemplate, ScoringConfig};

use crate::args::Options;
use crate::error::{CliError, CliResult};

/// Contents of a `--config` file. Every field is optional; relative paths are
/// resolved against the file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub embeddings_images: Option<PathBuf>,
    pub embeddings_text: Option<PathBuf>,
    pub logits: Option<PathBuf>,
    pub splits: Option<Vec<PathBuf>>,
    pub k: Option<usize>,
    pub temperature: Option<f64>,
    pub template: Option<String>,
    pub filter_stopwords: Option<bool>,
    pub dedup_against_seen: Option<bool>,
    pub skip_missing_candidates: Option<bool>,
    pub synthetic: Option<bool>,
    pub dim: Option<usize>,
    pub seed: Option<u64>,
    pub epsilon: Option<f64>,
    pub images_per_class: Option<usize>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::MissingData(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: FileConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        rebase(&mut config.embeddings_images);
        rebase(&mut config.embeddings_text);
        rebase(&mut config.logits);
        rebase(&mut config.out);
        if let Some(splits) = &mut config.splits {
            for s in splits {
                if s.is_relative() {
                    *s = base.join(&*s);
                }
            }
        }
        Ok(config)
    }
}

#[derive(Debug, Clone)]
pub enum Source {
    Files {
        images: PathBuf,
        texts: PathBuf,
        logits: PathBuf,
    },
    /// Synthetic embeddings; decoder outputs come from `logits` when given.
    Synthetic {
        world: SyntheticWorldConfig,
        logits: Option<PathBuf>,
    },
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub scoring: ScoringConfig,
    pub source: Option<Source>,
    pub world: SyntheticWorldConfig,
    pub splits: Vec<PathBuf>,
    pub threads: usize,
    pub out: Option<PathBuf>,
}

impl Settings {
    pub fn resolve(opts: &Options) -> CliResult<Self> {
        let file = match &opts.config {
            Some(path) => FileConfig::read(path)?,
            None => FileConfig::default(),
        };

        let defaults = ScoringConfig::default();
        let template = match opts.template.clone().or(file.template) {
            Some(t) => PromptTemplate::new(t)?,
            None => defaults.template,
        };
        let scoring = ScoringConfig {
            temperature: opts.temperature.or(file.temperature).unwrap_or(defaults.temperature),
            k: opts.k.or(file.k).unwrap_or(defaults.k),
            filter_stopwords: !opts.no_stopwords && file.filter_stopwords.unwrap_or(defaults.filter_stopwords),
            dedup_against_seen: !opts.no_dedup_seen && file.dedup_against_seen.unwrap_or(defaults.dedup_against_seen),
            skip_missing_candidates: opts.skip_missing_candidates
                || file.skip_missing_candidates.unwrap_or(defaults.skip_missing_candidates),
            template,
        };
        scoring.validate()?;

        let base = SyntheticWorldConfig::default();
        let world = SyntheticWorldConfig {
            dim: opts.dim.or(file.dim).unwrap_or(base.dim),
            seed: opts.seed.or(file.seed).unwrap_or(base.seed),
            epsilon: opts.epsilon.or(file.epsilon).unwrap_or(base.epsilon),
            images_per_class: opts
                .images_per_class
                .or(file.images_per_class)
                .unwrap_or(base.images_per_class),
            template: scoring.template.clone(),
            ..base
        };
        if world.dim < 2 {
            return Err(CliError::Config(format!("--dim must be at least 2, got {}", world.dim)));
        }
        if !(0.0..=1.0).contains(&world.epsilon) {
            return Err(CliError::Config(format!(
                "--epsilon must be in [0, 1], got {}",
                world.epsilon
            )));
        }

        let images = opts.embeddings_images.clone().or(file.embeddings_images);
        let texts = opts.embeddings_text.clone().or(file.embeddings_text);
        let logits = opts.logits.clone().or(file.logits);
        let synthetic = opts.synthetic || file.synthetic.unwrap_or(false);

        let source = if synthetic {
            if images.is_some() || texts.is_some() {
                return Err(CliError::Config(
                    "choose one backend: --synthetic cannot be combined with --embeddings-images/--embeddings-text"
                        .into(),
                ));
            }
            Some(Source::Synthetic {
                world: world.clone(),
                logits,
            })
        } else {
            match (images, texts, logits) {
                (Some(images), Some(texts), Some(logits)) => Some(Source::Files { images, texts, logits }),
                (None, None, None) => None,
                _ => {
                    return Err(CliError::Config(
                        "file backend needs --embeddings-images, --embeddings-text and --logits".into(),
                    ))
                }
            }
        };

        let splits = if opts.splits.is_empty() {
            file.splits.unwrap_or_default()
        } else {
            opts.splits.clone()
        };

        Ok(Self {
            scoring,
            source,
            world,
            splits,
            threads: opts.threads.or(file.threads).unwrap_or(0),
            out: opts.out.clone().or(file.out),
        })
    }

    pub fn read_splits(&self) -> CliResult<Vec<SplitSpec>> {
        Ok(self.splits.iter().map(read_split).collect::<Result<Vec<_>, _>>()?)
    }

    /// Loads the backend, decoder outputs and splits. In synthetic mode
    /// without split files, the built-in synthetic splits are used.
    pub fn load(&self) -> CliResult<Loaded> {
        let source = self.source.as_ref().ok_or_else(|| {
            CliError::Config(
                "no backend selected: pass --synthetic, or --embeddings-images, --embeddings-text and --logits".into(),
            )
        })?;
        let splits = self.read_splits()?;
        match source {
            Source::Files { images, texts, logits } => {
                let backend = FileBackend::new(read_store(images)?, read_store(texts)?)?;
                Ok(Loaded {
                    backend: Box::new(backend),
                    logits: read_logits(logits)?,
                    splits,
                    synthetic: None,
                })
            }
            Source::Synthetic { world, logits } => {
                let built = if splits.is_empty() {
                    SyntheticWorld::build(world)?
                } else {
                    SyntheticWorld::from_splits(world, splits)?
                };
                let logits = match logits {
                    Some(path) => read_logits(path)?,
                    None => built.logits,
                };
                Ok(Loaded {
                    backend: Box::new(built.backend),
                    logits,
                    splits: built.splits,
                    synthetic: Some(SyntheticEcho {
                        dim: world.dim,
                        seed: world.seed,
                        epsilon: world.epsilon,
                    }),
                })
            }
        }
    }
}

pub struct Loaded {
    pub backend: Box<dyn EmbeddingBackend>,
    pub logits: LogitsStore,
    pub splits: Vec<SplitSpec>,
    pub synthetic: Option<SyntheticEcho>,
}
