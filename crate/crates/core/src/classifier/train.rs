//! Head training: class-balanced batches, Adam, periodic validation and
//! best-checkpoint retention.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::{concat_input, HeadWeights, LabeledInput, DEFAULT_HIDDEN};
use super::optim::{Adam, AdamParams};
use super::ClassifierModel;
use crate::embed::Embedder;
use crate::error::ClassifierError;
use crate::eval::classification_metrics;
use crate::features::{FeatureVector, ScalerParams};
use crate::types::{AmbiguityLabel, DatasetRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub eval_every: usize,
    pub seed: u64,
    pub dropout_p: f64,
    pub hidden: usize,
    pub threshold: f64,
    pub adam: AdamParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-5,
            batch_size: 4,
            epochs: 3,
            eval_every: 50,
            seed: 0,
            dropout_p: 0.1,
            hidden: DEFAULT_HIDDEN,
            threshold: 0.5,
            adam: AdamParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let bad = |m: &str| Err(ClassifierError::InvalidConfig(m.to_string()));
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 || self.eval_every == 0 || self.hidden == 0 {
            return bad("batch_size, epochs, eval_every and hidden must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad("dropout_p must lie in [0, 1)");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Samples indices with replacement, weighting each record by the inverse of
/// its class count so both classes are equally likely per draw.
#[derive(Debug, Clone)]
pub struct BalancedSampler {
    dist: WeightedIndex<f64>,
}

impl BalancedSampler {
    pub fn new(labels: &[AmbiguityLabel]) -> Result<Self, ClassifierError> {
        let amb = labels.iter().filter(|l| l.is_ambiguous()).count();
        let clear = labels.len() - amb;
        if amb == 0 || clear == 0 {
            return Err(ClassifierError::SingleClass("training data"));
        }
        let weights = labels.iter().map(|l| {
            if l.is_ambiguous() {
                1.0 / amb as f64
            } else {
                1.0 / clear as f64
            }
        });
        let dist = WeightedIndex::new(weights).expect("weights are positive and finite");
        Ok(Self { dist })
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Vec<usize> {
        (0..batch_size).map(|_| self.dist.sample(rng)).collect()
    }
}

pub fn weighted_sample<R: Rng + ?Sized>(
    labels: &[AmbiguityLabel],
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<usize>, ClassifierError> {
    Ok(BalancedSampler::new(labels)?.sample(batch_size, rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    pub validation_loss: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean of recall and F1 for the ambiguous class.
    pub selection_metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ClassifierModel,
    pub evaluations: Vec<EvalPoint>,
    pub best_step: usize,
    pub total_steps: usize,
}

impl TrainOutcome {
    pub fn best(&self) -> &EvalPoint {
        self.evaluations
            .iter()
            .find(|e| e.step == self.best_step)
            .expect("best step is always an evaluation point")
    }
}

/// Embeds and scales every record into head inputs.
pub fn prepare_inputs(
    records: &[DatasetRecord],
    embedder: &dyn Embedder,
    scaler: &ScalerParams,
) -> Result<Vec<LabeledInput>, ClassifierError> {
    let texts: Vec<&str> = records.iter().map(|r| r.query.as_str()).collect();
    let embeddings = embedder.embed_batch(&texts)?;
    Ok(records
        .iter()
        .zip(embeddings)
        .map(|(r, t)| LabeledInput {
            input: concat_input(&t, &scaler.apply(&FeatureVector::of(&r.query))),
            label: r.label,
        })
        .collect())
}

fn evaluate(head: &HeadWeights, data: &[LabeledInput], threshold: f64, step: usize) -> EvalPoint {
    let mut loss = 0.0;
    let mut preds = Vec::with_capacity(data.len());
    for s in data {
        let p = head.predict_ambiguous(&s.input).expect("inputs were shape-checked");
        let p_true = if s.label.is_ambiguous() { p } else { 1.0 - p };
        loss -= p_true.max(f64::MIN_POSITIVE).ln();
        preds.push(if p >= threshold { AmbiguityLabel::Ambiguous } else { AmbiguityLabel::Clear });
    }
    let gold: Vec<_> = data.iter().map(|s| s.label).collect();
    let report = classification_metrics(&preds, &gold).expect("equal, non-empty lists");
    EvalPoint {
        step,
        validation_loss: loss / data.len() as f64,
        recall: report.recall,
        f1: report.f1,
        selection_metric: (report.recall + report.f1) / 2.0,
    }
}

fn has_both_classes(records: &[DatasetRecord]) -> bool {
    records.iter().any(|r| r.label.is_ambiguous()) && records.iter().any(|r| !r.label.is_ambiguous())
}

/// Trains the head on `train`, evaluating on `validation` every
/// `cfg.eval_every` steps and at the final step. Returns the weights with the
/// highest mean of ambiguous-class recall and F1; ties keep the earlier step.
pub fn train(
    train: &[DatasetRecord],
    validation: &[DatasetRecord],
    cfg: &TrainConfig,
    embedder: &dyn Embedder,
    scaler: &ScalerParams,
) -> Result<TrainOutcome, ClassifierError> {
    cfg.validate()?;
    if !has_both_classes(train) {
        return Err(ClassifierError::SingleClass("training split"));
    }
    if !has_both_classes(validation) {
        return Err(ClassifierError::SingleClass("validation split"));
    }

    let train_inputs = prepare_inputs(train, embedder, scaler)?;
    let val_inputs = prepare_inputs(validation, embedder, scaler)?;
    let labels: Vec<_> = train_inputs.iter().map(|s| s.label).collect();
    let sampler = BalancedSampler::new(&labels)?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut sample_rng = init_rng.clone();
    sample_rng.set_stream(1);
    let mut dropout_rng = init_rng.clone();
    dropout_rng.set_stream(2);

    let input_dim = embedder.spec().dim + crate::features::NUM_FEATURES;
    let mut head = HeadWeights::init(input_dim, cfg.hidden, cfg.dropout_p, &mut init_rng);
    let mut opt = Adam::new(&head, cfg.learning_rate, cfg.adam);

    let steps_per_epoch = train_inputs.len().div_ceil(cfg.batch_size);
    let total_steps = steps_per_epoch * cfg.epochs;

    let mut evaluations = Vec::new();
    let mut best: Option<(f64, usize, HeadWeights)> = None;
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for step in 1..=total_steps {
        batch.clear();
        batch.extend(sampler.sample(cfg.batch_size, &mut sample_rng).into_iter().map(|i| train_inputs[i].clone()));
        let (_, grads) = head.loss_and_gradients(&batch, Some(&mut dropout_rng))?;
        opt.step(&mut head, &grads);

        if step % cfg.eval_every == 0 || step == total_steps {
            let point = evaluate(&head, &val_inputs, cfg.threshold, step);
            tracing::debug!(step, loss = point.validation_loss, metric = point.selection_metric, "validation");
            if best.as_ref().is_none_or(|(m, _, _)| point.selection_metric > *m) {
                best = Some((point.selection_metric, step, head.clone()));
            }
            evaluations.push(point);
        }
    }

    let (_, best_step, best_head) = best.expect("at least one evaluation runs");
    let model = ClassifierModel::new(best_head, scaler.clone(), embedder.spec().clone(), cfg.threshold)
        .with_train_config(cfg.clone());
    Ok(TrainOutcome { model, evaluations, best_step, total_steps })
}

/// Fits the feature scaler on `train` and then trains the head.
pub fn fit(
    train_set: &[DatasetRecord],
    validation: &[DatasetRecord],
    cfg: &TrainConfig,
    embedder: &dyn Embedder,
) -> Result<TrainOutcome, ClassifierError> {
    let rows: Vec<FeatureVector> = train_set.iter().map(|r| FeatureVector::of(&r.query)).collect();
    let scaler = crate::features::fit_scaler(&rows)?;
    train(train_set, validation, cfg, embedder, &scaler)
}
