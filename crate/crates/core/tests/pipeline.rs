//! End-to-end inference and split evaluation on synthetic data.

use zosd_core::candidates::{DecoderOutput, PositionTopK};
use zosd_core::eval::evaluate;
use zosd_core::label::seen_labels;
use zosd_core::scoring::{run_inference, Diagnostic};
use zosd_core::store::synthetic::{
    synthetic_decoder_output, SyntheticBackend, SyntheticDecoderShape, SyntheticWorld, SyntheticWorldConfig,
};
use zosd_core::store::{LogitsStore, SplitSpec, TestImage};
use zosd_core::{Error, PromptTemplate, ScoringConfig, StopList};

const SEEN: [&str; 6] = ["airplane", "automobile", "bird", "cat", "deer", "dog"];

fn world(images: &[(&str, &str)], epsilon: f64) -> (SyntheticBackend, LogitsStore) {
    let mut backend = SyntheticBackend::new(512, 42, epsilon, PromptTemplate::default()).unwrap();
    let mut logits = LogitsStore::new();
    for (id, class) in images {
        backend.add_image(*id, *class);
        logits
            .insert(synthetic_decoder_output(id, class, 42, SyntheticDecoderShape::default()).unwrap())
            .unwrap();
    }
    (backend, logits)
}

#[test]
fn unseen_boat_image_scores_high() {
    let (backend, logits) = world(&[("boat_000", "boat")], 0.1);
    let seen = seen_labels(&SEEN).unwrap();
    let r = run_inference(
        "boat_000",
        &seen,
        &backend,
        &logits,
        &ScoringConfig::default(),
        &StopList::english(),
    )
    .unwrap();
    assert!(r.score > 0.5, "score {}", r.score);
    assert!((r.score + r.distribution.entries[..6].iter().map(|e| e.probability).sum::<f64>() - 1.0).abs() < 1e-6);
}

#[test]
fn seen_dog_image_scores_low_and_is_classified() {
    let (backend, logits) = world(&[("dog_000", "dog")], 0.1);
    let seen = seen_labels(&SEEN).unwrap();
    let r = run_inference(
        "dog_000",
        &seen,
        &backend,
        &logits,
        &ScoringConfig::default(),
        &StopList::english(),
    )
    .unwrap();
    assert!(r.score < 0.5, "score {}", r.score);
    assert_eq!(r.predicted_seen.name, "dog");
    // the decoder named the dog, but dedup keeps it out of the candidates
    assert!(r.distribution.entries[6..].iter().all(|e| e.label.name != "dog"));
}

#[test]
fn empty_candidates_after_filtering_score_zero() {
    let (backend, _) = world(&[("cat_000", "cat")], 0.1);
    let mut logits = LogitsStore::new();
    let pos =
        PositionTopK::from_unsorted(vec![("the".into(), -0.1), ("cat".into(), -0.2), ("a".into(), -0.3)]).unwrap();
    logits
        .insert(DecoderOutput::new("cat_000", 3, vec![pos]).unwrap())
        .unwrap();
    let seen = seen_labels(&SEEN).unwrap();
    let r = run_inference(
        "cat_000",
        &seen,
        &backend,
        &logits,
        &ScoringConfig {
            k: 3,
            ..Default::default()
        },
        &StopList::english(),
    )
    .unwrap();
    assert_eq!(r.score, 0.0);
    assert!(r.diagnostics.contains(&Diagnostic::EmptyCandidates));
}

#[test]
fn missing_inputs() {
    let (backend, logits) = world(&[("cat_000", "cat")], 0.1);
    let seen = seen_labels(&SEEN).unwrap();
    let config = ScoringConfig::default();
    let stop = StopList::english();
    assert!(matches!(
        run_inference("nope", &seen, &backend, &logits, &config, &stop),
        Err(Error::MissingImage(_))
    ));
    let mut backend2 = backend.clone();
    backend2.add_image("orphan", "cat");
    assert!(matches!(
        run_inference("orphan", &seen, &backend2, &logits, &config, &stop),
        Err(Error::MissingDecoderOutput(_))
    ));
    let too_big = ScoringConfig {
        k: 36,
        ..Default::default()
    };
    assert!(matches!(
        run_inference("cat_000", &seen, &backend, &logits, &too_big, &stop),
        Err(Error::KTooLarge { .. })
    ));
}

#[test]
fn run_inference_equals_composition() {
    use zosd_core::{extract_candidates, open_set_score, EmbeddingBackend, LabelSpace};
    let (backend, logits) = world(&[("horse_001", "horse")], 0.3);
    let seen = seen_labels(&SEEN).unwrap();
    let config = ScoringConfig::default();
    let stop = StopList::english();
    let composed = run_inference("horse_001", &seen, &backend, &logits, &config, &stop).unwrap();
    let cands = extract_candidates(logits.get("horse_001").unwrap(), &config, &stop, &seen).unwrap();
    let space = LabelSpace::new(seen.clone(), cands, true).unwrap();
    let image = backend.embed_image("horse_001").unwrap();
    let direct = open_set_score("horse_001", &image, &space, &backend, &config).unwrap();
    assert_eq!(composed, direct);
}

fn small_world(epsilon: f64, seed: u64) -> SyntheticWorld {
    SyntheticWorld::build(&SyntheticWorldConfig {
        epsilon,
        seed,
        images_per_class: 20,
        num_splits: 1,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn aligned_split_separates() {
    let w = small_world(0.1, 42);
    let e = evaluate(
        &w.splits[0],
        &w.backend,
        &w.logits,
        &ScoringConfig::default(),
        &StopList::english(),
    )
    .unwrap();
    assert!(e.report.auroc >= 0.95, "{}", e.report.auroc);
    assert_eq!(e.report.n_seen_images, 120);
    assert_eq!(e.report.n_unseen_images, 80);
    assert!((e.report.openness_pct - 13.397_459_621_556_14).abs() < 1e-9);
    assert_eq!(e.report.histograms.len(), 10);
    for h in &e.report.histograms {
        assert_eq!(h.counts.iter().sum::<usize>(), 20);
    }
}

#[test]
fn evaluation_is_deterministic_across_pools() {
    let w = small_world(0.5, 7);
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            evaluate(
                &w.splits[0],
                &w.backend,
                &w.logits,
                &ScoringConfig::default(),
                &StopList::english(),
            )
            .unwrap()
            .report
        })
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn split_without_unseen_images_is_one_class() {
    let w = small_world(0.1, 42);
    let mut split: SplitSpec = w.splits[0].clone();
    let unseen = split.unseen.clone();
    split.images.retain(|i: &TestImage| !unseen.contains(&i.class));
    let err = evaluate(
        &split,
        &w.backend,
        &w.logits,
        &ScoringConfig::default(),
        &StopList::english(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::OneClassOnly { n_unseen: 0, .. }));
}

#[test]
fn score_beats_msp_when_noise_keeps_msp_unsaturated() {
    // At low noise both scores separate perfectly; at eps=0.9 seen images no
    // longer push MSP to exactly 0 and the generated mass separates better.
    let config = SyntheticWorldConfig {
        epsilon: 0.9,
        images_per_class: 20,
        num_splits: 2,
        ..SyntheticWorldConfig::default()
    };
    let world = SyntheticWorld::build(&config).unwrap();
    for split in &world.splits {
        let e = evaluate(
            split,
            &world.backend,
            &world.logits,
            &ScoringConfig::default(),
            &StopList::english(),
        )
        .unwrap();
        assert!(
            e.report.auroc > e.report.auroc_msp,
            "{}: {} vs {}",
            split.name,
            e.report.auroc,
            e.report.auroc_msp
        );
    }
}
