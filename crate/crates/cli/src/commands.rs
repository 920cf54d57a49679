use std::collections::HashSet;
use std::io::Write;

use log::{info, warn};
use zosd_core::candidates::extract_candidates;
use zosd_core::eval::{evaluate, format_percent, openness, ReportMetadata, SplitEvaluation};
use zosd_core::label::{seen_labels, LabelKind};
use zosd_core::store::embeddings::EmbeddingStore;
use zosd_core::store::synthetic::{caption_vocabulary, SyntheticWorld, FUNCTION_WORDS};
use zosd_core::store::{write_logits, write_split, write_store, SplitSpec};
use zosd_core::{run_inference, EvalReport, Label, StopList};

use crate::error::{CliError, CliResult};
use crate::output::{histogram_rows, split_rows, to_csv, to_json, write_all_atomic, ScoreOutput, ScoreRow};
use crate::settings::{Loaded, Settings};

fn thread_pool(threads: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Internal(format!("cannot start thread pool: {e}")))
}

/// Seen labels for single-image commands: the first split, if any.
fn first_split_seen(loaded: &Loaded) -> CliResult<Option<Vec<Label>>> {
    loaded
        .splits
        .first()
        .map(|s| seen_labels(&s.seen))
        .transpose()
        .map_err(Into::into)
}

pub fn score(settings: &Settings, image_id: &str, verbose: bool, out: &mut dyn Write) -> CliResult<()> {
    let loaded = settings.load()?;
    let seen = first_split_seen(&loaded)?
        .ok_or_else(|| CliError::Config("score needs --split to define the seen labels".into()))?;
    let result = run_inference(
        image_id,
        &seen,
        loaded.backend.as_ref(),
        &loaded.logits,
        &settings.scoring,
        &StopList::english(),
    )?;
    let metadata = ReportMetadata::new(&settings.scoring, loaded.synthetic.clone());
    let output = ScoreOutput::new(result, metadata, verbose);
    emit(out, to_json(&output)?.as_bytes())
}

pub fn candidates(settings: &Settings, image_id: &str, out: &mut dyn Write) -> CliResult<()> {
    let loaded = settings.load()?;
    let seen = first_split_seen(&loaded)?.unwrap_or_default();
    let decoder = loaded
        .logits
        .get(image_id)
        .ok_or_else(|| zosd_core::Error::MissingDecoderOutput(image_id.to_owned()))?;
    let set = extract_candidates(decoder, &settings.scoring, &StopList::english(), &seen)?;
    let mut text = String::new();
    for c in set.candidates() {
        text.push_str(&format!("{}\t{}\n", c.label.name, c.best_logprob));
    }
    emit(out, text.as_bytes())
}

pub fn openness_cmd(n_train: usize, n_target: usize, n_test: usize, out: &mut dyn Write) -> CliResult<()> {
    let value = openness(n_train, n_target, n_test)?;
    emit(out, format!("{}\n", format_percent(value)).as_bytes())
}

pub fn evaluate_cmd(settings: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let dir = settings
        .out
        .clone()
        .ok_or_else(|| CliError::Config("evaluate needs --out DIR".into()))?;
    let loaded = settings.load()?;
    if loaded.splits.is_empty() {
        return Err(CliError::Config("evaluate needs at least one --split".into()));
    }
    let stoplist = StopList::english();
    let pool = thread_pool(settings.threads)?;
    let evaluations: Vec<SplitEvaluation> = pool.install(|| {
        loaded
            .splits
            .iter()
            .map(|split| {
                info!("evaluating split {} ({} images)", split.name, split.images.len());
                evaluate(
                    split,
                    loaded.backend.as_ref(),
                    &loaded.logits,
                    &settings.scoring,
                    &stoplist,
                )
            })
            .collect::<Result<Vec<_>, _>>()
    })?;

    let mut score_rows = Vec::new();
    for (split, evaluation) in loaded.splits.iter().zip(&evaluations) {
        let empty = evaluation
            .results
            .iter()
            .filter(|(r, _)| r.diagnostics.iter().any(is_empty_candidates))
            .count();
        if empty > 0 {
            warn!("split {}: {empty} images had no generated candidates", split.name);
        }
        for (result, unseen) in &evaluation.results {
            score_rows.push(ScoreRow {
                split: split.name.clone(),
                image_id: result.image_id.clone(),
                unseen: *unseen,
                score: result.score,
                msp_score: result.msp_score,
                predicted_seen: result.predicted_seen.name.clone(),
                n_candidates: result
                    .distribution
                    .entries
                    .iter()
                    .filter(|e| e.label.kind == LabelKind::Generated)
                    .count(),
            });
        }
    }

    let report = EvalReport::new(
        evaluations.into_iter().map(|e| e.report).collect(),
        &settings.scoring,
        loaded.synthetic.clone(),
    )?;
    write_all_atomic(
        &dir,
        &[
            ("report.json", to_json(&report)?.into_bytes()),
            ("report.csv", to_csv(&split_rows(&report))?),
            ("histograms.csv", to_csv(&histogram_rows(&report))?),
            ("scores.csv", to_csv(&score_rows)?),
        ],
    )?;

    let mut text = String::new();
    for s in &report.splits {
        text.push_str(&format!(
            "{}\tauroc={:.4}\tauroc_msp={:.4}\topenness={}\n",
            s.name,
            s.auroc,
            s.auroc_msp,
            format_percent(s.openness_pct)
        ));
    }
    let a = &report.aggregate;
    text.push_str(&format!(
        "mean\tauroc={:.4}±{:.4}\tauroc_msp={:.4}±{:.4}\n",
        a.mean_auroc, a.std_auroc, a.mean_auroc_msp, a.std_auroc_msp
    ));
    emit(out, text.as_bytes())
}

fn is_empty_candidates(d: &zosd_core::scoring::Diagnostic) -> bool {
    matches!(d, zosd_core::scoring::Diagnostic::EmptyCandidates)
}

/// Writes the synthetic benchmark as regular files: `images.emb`,
/// `texts.emb`, `logits.jsonl` and one JSON file per split.
pub fn export_synthetic(settings: &Settings, out: &mut dyn Write) -> CliResult<()> {
    let dir = settings
        .out
        .clone()
        .ok_or_else(|| CliError::Config("export-synthetic needs --out DIR".into()))?;
    let splits = settings.read_splits()?;
    let world = if splits.is_empty() {
        SyntheticWorld::build(&settings.world)?
    } else {
        SyntheticWorld::from_splits(&settings.world, splits)?
    };
    use zosd_core::EmbeddingBackend;

    let mut images = EmbeddingStore::new(settings.world.dim);
    let mut texts = EmbeddingStore::new(settings.world.dim);
    let mut words: Vec<&str> = Vec::new();
    for split in &world.splits {
        words.extend(split.seen.iter().chain(&split.unseen).map(String::as_str));
        for image in &split.images {
            if !images.contains(&image.id) {
                images.insert(image.id.clone(), world.backend.embed_image(&image.id)?.into_owned())?;
            }
        }
    }
    words.extend(caption_vocabulary());
    words.extend(FUNCTION_WORDS);
    let mut prompts = HashSet::new();
    for word in words {
        let prompt = settings.world.template.render(word);
        if prompts.insert(prompt.clone()) {
            let v = world
                .backend
                .embed_text(&prompt)?
                .ok_or_else(|| CliError::Internal(format!("synthetic backend has no vector for {prompt:?}")))?;
            texts.insert(prompt, v.into_owned())?;
        }
    }

    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::MissingData(format!("cannot create {}: {e}", dir.display())))?;
    write_store(&images, dir.join("images.emb"))?;
    write_store(&texts, dir.join("texts.emb"))?;
    write_logits(&world.logits, dir.join("logits.jsonl"))?;
    let mut text = String::new();
    for split in &world.splits {
        let path = dir.join(split_file_name(split));
        write_split(split, &path)?;
        text.push_str(&format!("{}\n", path.display()));
    }
    emit(out, text.as_bytes())
}

fn split_file_name(split: &SplitSpec) -> String {
    let safe: String = split
        .name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.json")
}

fn emit(out: &mut dyn Write, bytes: &[u8]) -> CliResult<()> {
    out.write_all(bytes)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::Internal(format!("cannot write output: {e}")))
}
