use agqr_core::classifier::{fit, TrainConfig};
use agqr_core::lexical::{EntityTypeLexicon, WordList};
use agqr_core::synthetic::SyntheticCorpus;
use agqr_core::{AmbiguityDetector, AmbiguityLabel, Embedder, HashingEmbedder, Query, QueryClassifier};
use std::sync::Arc;

fn small() -> (Vec<agqr_core::DatasetRecord>, Vec<agqr_core::DatasetRecord>) {
    let s = SyntheticCorpus::generate(7, 120, 120).split(0.7, 0.15, 7);
    (s.train, s.validation)
}

#[test]
fn same_seed_same_model() {
    let (train, val) = small();
    let e = HashingEmbedder::default();
    let cfg = TrainConfig { seed: 11, ..TrainConfig::default() };
    let a = fit(&train, &val, &cfg, &e).unwrap();
    let b = fit(&train, &val, &cfg, &e).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.evaluations, b.evaluations);

    let c = fit(&train, &val, &TrainConfig { seed: 12, ..cfg }, &e).unwrap();
    assert_ne!(a.model.head, c.model.head);
}

#[test]
fn long_eval_interval_still_evaluates_final_step() {
    let (train, val) = small();
    let cfg = TrainConfig { eval_every: 1_000_000, epochs: 1, ..TrainConfig::default() };
    let out = fit(&train, &val, &cfg, &HashingEmbedder::default()).unwrap();
    assert_eq!(out.evaluations.len(), 1);
    assert_eq!(out.evaluations[0].step, out.total_steps);
    assert_eq!(out.best_step, out.total_steps);
}

#[test]
fn retained_checkpoint_is_first_maximum() {
    let (train, val) = small();
    let out = fit(&train, &val, &TrainConfig { eval_every: 10, ..TrainConfig::default() }, &HashingEmbedder::default())
        .unwrap();
    let best = out.best().selection_metric;
    assert!(out.evaluations.iter().all(|e| e.selection_metric <= best));
    let first = out.evaluations.iter().find(|e| e.selection_metric == best).unwrap();
    assert_eq!(first.step, out.best_step);
    let steps: Vec<_> = out.evaluations.iter().map(|e| e.step).collect();
    assert!(steps.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(*steps.last().unwrap(), out.total_steps);
}

#[test]
fn trained_detector_flags_vague_queries() {
    let s = SyntheticCorpus::generate(1, 3500, 3500).split(0.7, 0.15, 1);
    let e: Arc<dyn Embedder> = Arc::new(HashingEmbedder::default());
    let out = fit(&s.train, &s.validation, &TrainConfig::default(), e.as_ref()).unwrap();
    assert!(out.best().f1 >= 0.95, "{:?}", out.best());
    let det = AmbiguityDetector::new(
        Arc::new(out.model),
        e,
        EntityTypeLexicon::default_types(),
        WordList::default_common_words(),
    )
    .unwrap();
    let v = det.classify(&Query::new("What is it?").unwrap()).unwrap();
    assert_eq!(v.label, AmbiguityLabel::Ambiguous, "{v:?}");
    // an entity-type word overrides the model whatever it says
    let v = det.classify(&Query::new("What is the row count of the Web Events dataset?").unwrap()).unwrap();
    assert_eq!(v.label, AmbiguityLabel::Clear);
}
