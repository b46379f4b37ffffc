//! Two-layer fully connected head: `W2·dropout(tanh(W1·x + b1)) + b2`.
//!
//! `w1` is stored row-major with shape `[input_dim, hidden]`, `w2` with
//! shape `[hidden, 2]`. Index 0 of the output is `clear`, index 1 is
//! `ambiguous`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::Embedding;
use crate::error::{ClassifierError, DimensionMismatch};
use crate::features::NUM_FEATURES;
use crate::types::AmbiguityLabel;

pub const NUM_CLASSES: usize = 2;
pub const DEFAULT_HIDDEN: usize = 384;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadWeights {
    pub input_dim: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub dropout_p: f64,
}

/// Gradients with the same layout as [`HeadWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// One training example: the concatenated `[embedding ‖ scaled features]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInput {
    pub input: Vec<f64>,
    pub label: AmbiguityLabel,
}

/// How dropout behaves during a forward pass.
pub enum Mode<'a, R: Rng + ?Sized> {
    Inference,
    Training(&'a mut R),
}

pub fn class_index(label: AmbiguityLabel) -> usize {
    match label {
        AmbiguityLabel::Clear => 0,
        AmbiguityLabel::Ambiguous => 1,
    }
}

/// Numerically stable two-way softmax.
pub fn softmax(logits: [f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let s = e[0] + e[1];
    [e[0] / s, e[1] / s]
}

fn log_softmax(logits: [f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    [logits[0] - lse, logits[1] - lse]
}

pub fn concat_input(t: &Embedding, f_scaled: &[f64; NUM_FEATURES]) -> Vec<f64> {
    let mut x = Vec::with_capacity(t.dim() + NUM_FEATURES);
    x.extend_from_slice(t.values());
    x.extend_from_slice(f_scaled);
    x
}

struct Activations {
    /// tanh outputs before dropout
    hidden: Vec<f64>,
    /// per-unit dropout multiplier (0 or 1/(1-p)); all ones at inference
    keep: Vec<f64>,
    logits: [f64; NUM_CLASSES],
}

impl HeadWeights {
    pub fn zeros(input_dim: usize, hidden: usize, dropout_p: f64) -> Self {
        Self {
            input_dim,
            hidden,
            w1: vec![0.0; input_dim * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * NUM_CLASSES],
            b2: vec![0.0; NUM_CLASSES],
            dropout_p,
        }
    }

    /// Uniform in ±sqrt(6/(fan_in+fan_out)) per layer, zero biases.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, dropout_p: f64, rng: &mut R) -> Self {
        let mut head = Self::zeros(input_dim, hidden, dropout_p);
        let a1 = (6.0 / (input_dim + hidden) as f64).sqrt();
        head.w1.iter_mut().for_each(|w| *w = rng.random_range(-a1..a1));
        let a2 = (6.0 / (hidden + NUM_CLASSES) as f64).sqrt();
        head.w2.iter_mut().for_each(|w| *w = rng.random_range(-a2..a2));
        head
    }

    pub fn embedding_dim(&self) -> usize {
        self.input_dim - NUM_FEATURES
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Checks that every array agrees with the declared shapes.
    pub fn validate(&self) -> Result<(), String> {
        if self.input_dim <= NUM_FEATURES || self.hidden == 0 {
            return Err(format!("bad shape ({}, {})", self.input_dim, self.hidden));
        }
        if self.w1.len() != self.input_dim * self.hidden
            || self.b1.len() != self.hidden
            || self.w2.len() != self.hidden * NUM_CLASSES
            || self.b2.len() != NUM_CLASSES
        {
            return Err("weight arrays do not match declared shapes".into());
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(format!("dropout probability {} outside [0, 1)", self.dropout_p));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<(), DimensionMismatch> {
        if x.len() != self.input_dim {
            return Err(DimensionMismatch { left: self.input_dim, right: x.len() });
        }
        Ok(())
    }

    fn activations<R: Rng + ?Sized>(&self, x: &[f64], mode: Mode<'_, R>) -> Activations {
        let h = self.hidden;
        let mut pre = self.b1.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.w1[i * h..(i + 1) * h];
            pre.iter_mut().zip(row).for_each(|(p, w)| *p += xi * w);
        }
        let hidden: Vec<f64> = pre.iter().map(|v| v.tanh()).collect();
        let keep = match mode {
            Mode::Training(rng) if self.dropout_p > 0.0 => {
                let scale = 1.0 / (1.0 - self.dropout_p);
                (0..h)
                    .map(|_| if rng.random::<f64>() < self.dropout_p { 0.0 } else { scale })
                    .collect()
            }
            _ => vec![1.0; h],
        };
        let mut logits = [self.b2[0], self.b2[1]];
        for j in 0..h {
            let a = hidden[j] * keep[j];
            logits[0] += a * self.w2[j * NUM_CLASSES];
            logits[1] += a * self.w2[j * NUM_CLASSES + 1];
        }
        Activations { hidden, keep, logits }
    }

    /// Logits for a pre-concatenated input.
    pub fn forward_input<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        mode: Mode<'_, R>,
    ) -> Result<[f64; NUM_CLASSES], DimensionMismatch> {
        self.check_input(x)?;
        Ok(self.activations(x, mode).logits)
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        t: &Embedding,
        f_scaled: &[f64; NUM_FEATURES],
        mode: Mode<'_, R>,
    ) -> Result<[f64; NUM_CLASSES], DimensionMismatch> {
        self.forward_input(&concat_input(t, f_scaled), mode)
    }

    /// Deterministic inference; returns the ambiguous-class probability.
    pub fn predict_ambiguous(&self, x: &[f64]) -> Result<f64, DimensionMismatch> {
        let logits = self.forward_input::<rand_chacha::ChaCha8Rng>(x, Mode::Inference)?;
        Ok(softmax(logits)[1])
    }

    /// Mean cross-entropy over `batch` and its gradient w.r.t. every parameter.
    /// Dropout is applied when `dropout_rng` is given.
    pub fn loss_and_gradients<R: Rng + ?Sized>(
        &self,
        batch: &[LabeledInput],
        mut dropout_rng: Option<&mut R>,
    ) -> Result<(f64, HeadGradients), ClassifierError> {
        if batch.is_empty() {
            return Err(ClassifierError::EmptyBatch);
        }
        let h = self.hidden;
        let n = batch.len() as f64;
        let mut grads = HeadGradients {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; h],
            w2: vec![0.0; self.w2.len()],
            b2: vec![0.0; NUM_CLASSES],
        };
        let mut loss = 0.0;
        let mut d_pre = vec![0.0; h];
        for sample in batch {
            self.check_input(&sample.input)?;
            let mode = match dropout_rng.as_deref_mut() {
                Some(rng) => Mode::Training(rng),
                None => Mode::Inference,
            };
            let act = self.activations(&sample.input, mode);
            let y = class_index(sample.label);
            loss -= log_softmax(act.logits)[y];

            let p = softmax(act.logits);
            let mut d_logits = [p[0] / n, p[1] / n];
            d_logits[y] -= 1.0 / n;

            grads.b2[0] += d_logits[0];
            grads.b2[1] += d_logits[1];
            for (j, dp) in d_pre.iter_mut().enumerate() {
                let a = act.hidden[j] * act.keep[j];
                grads.w2[j * NUM_CLASSES] += a * d_logits[0];
                grads.w2[j * NUM_CLASSES + 1] += a * d_logits[1];
                let d_a = self.w2[j * NUM_CLASSES] * d_logits[0]
                    + self.w2[j * NUM_CLASSES + 1] * d_logits[1];
                *dp = d_a * act.keep[j] * (1.0 - act.hidden[j] * act.hidden[j]);
                grads.b1[j] += *dp;
            }
            for (i, &xi) in sample.input.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &mut grads.w1[i * h..(i + 1) * h];
                row.iter_mut().zip(&d_pre).for_each(|(g, d)| *g += xi * d);
            }
        }
        Ok((loss / n, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type NoRng = ChaCha8Rng;

    #[test]
    fn zero_network_is_uniform() {
        let head = HeadWeights::zeros(8, 4, 0.1);
        let logits = head.forward_input::<NoRng>(&[0.3; 8], Mode::Inference).unwrap();
        assert_eq!(logits, [0.0, 0.0]);
        assert_eq!(softmax(logits), [0.5, 0.5]);
        let batch = [
            LabeledInput { input: vec![1.0; 8], label: AmbiguityLabel::Clear },
            LabeledInput { input: vec![-1.0; 8], label: AmbiguityLabel::Ambiguous },
        ];
        let (loss, _) = head.loss_and_gradients::<NoRng>(&batch, None).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn output_bias_dominates() {
        let mut head = HeadWeights::zeros(8, 4, 0.0);
        head.b2 = vec![0.0, 10.0];
        let p = head.predict_ambiguous(&[0.5; 8]).unwrap();
        let expected = 10f64.exp() / (1.0 + 10f64.exp());
        assert!((p - expected).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_prediction_has_vanishing_loss() {
        let mut head = HeadWeights::zeros(4, 2, 0.0);
        head.b2 = vec![-40.0, 40.0];
        let batch = [LabeledInput { input: vec![0.0; 4], label: AmbiguityLabel::Ambiguous }];
        let (loss, _) = head.loss_and_gradients::<NoRng>(&batch, None).unwrap();
        assert!(loss < 1e-30);
    }

    #[test]
    fn inference_is_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = HeadWeights::init(11, 5, 0.5, &mut rng);
        let x: Vec<f64> = (0..11).map(|i| (i as f64 * 0.37).sin()).collect();
        let a = head.forward_input::<NoRng>(&x, Mode::Inference).unwrap();
        let b = head.forward_input::<NoRng>(&x, Mode::Inference).unwrap();
        assert_eq!(a.map(f64::to_bits), b.map(f64::to_bits));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let head = HeadWeights::zeros(8, 4, 0.0);
        assert!(head.forward_input::<NoRng>(&[0.0; 7], Mode::Inference).is_err());
        assert!(head.loss_and_gradients::<NoRng>(&[], None).is_err());
    }

    #[test]
    fn dropout_keeps_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let head = HeadWeights::init(6, 64, 0.3, &mut rng);
        let x = [0.2, -0.1, 0.4, 0.0, 1.0, -0.5];
        let clean = head.forward_input::<NoRng>(&x, Mode::Inference).unwrap();
        let trials = 4000;
        let mut mean = [0.0; 2];
        for _ in 0..trials {
            let l = head.forward_input(&x, Mode::Training(&mut rng)).unwrap();
            mean[0] += l[0] / trials as f64;
            mean[1] += l[1] / trials as f64;
        }
        assert!((mean[0] - clean[0]).abs() < 0.05, "{mean:?} vs {clean:?}");
        assert!((mean[1] - clean[1]).abs() < 0.05);
    }
}
