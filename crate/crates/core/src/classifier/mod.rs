//! Ambiguity classifier: a fully connected head over a sentence embedding
//! concatenated with the robust-scaled hand-crafted features, followed by the
//! rule-based lexical override.

mod head;
mod optim;
mod train;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use head::{
    class_index, concat_input, softmax, HeadGradients, HeadWeights, LabeledInput, Mode,
    DEFAULT_HIDDEN, NUM_CLASSES,
};
pub use optim::{Adam, AdamParams};
pub use train::{
    fit, prepare_inputs, train, weighted_sample, BalancedSampler, EvalPoint, TrainConfig, TrainOutcome,
};

use crate::embed::{Embedder, EmbedderSpec};
use crate::error::{ClassifierError, DimensionMismatch};
use crate::features::{FeatureVector, ScalerParams, NUM_FEATURES};
use crate::lexical::{lexical_override, mask_entities, EntityTypeLexicon, MaskedQuery, WordList};
use crate::types::{AmbiguityVerdict, Query};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub head: HeadWeights,
    pub scaler: ScalerParams,
    pub embedder: EmbedderSpec,
    pub threshold: f64,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_config: Option<TrainConfig>,
}

impl ClassifierModel {
    pub fn new(head: HeadWeights, scaler: ScalerParams, embedder: EmbedderSpec, threshold: f64) -> Self {
        let mut model = Self { head, scaler, embedder, threshold, version: String::new(), train_config: None };
        model.version = model.fingerprint();
        model
    }

    pub fn with_train_config(mut self, cfg: TrainConfig) -> Self {
        self.train_config = Some(cfg);
        self
    }

    /// Short content hash of the weights and scaler.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for arr in [&self.head.w1, &self.head.b1, &self.head.w2, &self.head.b2] {
            for v in arr.iter() {
                h.update(v.to_le_bytes());
            }
        }
        for v in self.scaler.median.iter().chain(&self.scaler.iqr) {
            h.update(v.to_le_bytes());
        }
        h.update(self.embedder.identity.as_bytes());
        format!("fc-{}", &hex::encode(h.finalize())[..12])
    }

    pub fn validate(&self) -> Result<(), String> {
        self.head.validate()?;
        if self.embedder.dim + NUM_FEATURES != self.head.input_dim {
            return Err(format!(
                "embedder dim {} + {NUM_FEATURES} features != head input {}",
                self.embedder.dim, self.head.input_dim
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(format!("threshold {} outside (0, 1)", self.threshold));
        }
        if self.scaler.iqr.iter().any(|v| v.is_nan() || *v <= 0.0) {
            return Err("scaler IQR entries must be positive".into());
        }
        Ok(())
    }

    /// Model-only probability of the ambiguous class.
    pub fn score(&self, embedder: &dyn Embedder, q: &Query) -> Result<(f64, FeatureVector), ClassifierError> {
        let features = FeatureVector::of(q);
        let t = embedder.embed(q.as_str())?;
        let x = concat_input(&t, &self.scaler.apply(&features));
        Ok((self.head.predict_ambiguous(&x)?, features))
    }
}

/// Full classification output, including the intermediate artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: AmbiguityVerdict,
    pub masked: MaskedQuery,
    pub features: FeatureVector,
}

/// Anything that can label a query. The pipeline depends only on this.
pub trait QueryClassifier: Send + Sync {
    fn classify(&self, q: &Query) -> Result<AmbiguityVerdict, ClassifierError>;
}

impl<C: QueryClassifier + ?Sized> QueryClassifier for Arc<C> {
    fn classify(&self, q: &Query) -> Result<AmbiguityVerdict, ClassifierError> {
        (**self).classify(q)
    }
}

/// A trained model bound to its embedder and lexicons.
pub struct AmbiguityDetector {
    model: Arc<ClassifierModel>,
    embedder: Arc<dyn Embedder>,
    lexicon: EntityTypeLexicon,
    common_words: WordList,
}

impl AmbiguityDetector {
    pub fn new(
        model: Arc<ClassifierModel>,
        embedder: Arc<dyn Embedder>,
        lexicon: EntityTypeLexicon,
        common_words: WordList,
    ) -> Result<Self, ClassifierError> {
        let spec = embedder.spec();
        if spec.dim != model.embedder.dim {
            return Err(DimensionMismatch { left: model.embedder.dim, right: spec.dim }.into());
        }
        if spec.identity != model.embedder.identity {
            return Err(ClassifierError::EmbedderMismatch {
                expected: model.embedder.identity.clone(),
                actual: spec.identity.clone(),
            });
        }
        Ok(Self { model, embedder, lexicon, common_words })
    }

    pub fn model(&self) -> &ClassifierModel {
        &self.model
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn classify_detailed(&self, q: &Query) -> Result<Classification, ClassifierError> {
        let (score, features) = self.model.score(self.embedder.as_ref(), q)?;
        let model_verdict = AmbiguityVerdict::from_model(score, self.model.threshold);
        let masked = mask_entities(q, &self.common_words);
        let verdict = lexical_override(q, &masked, model_verdict, &self.lexicon);
        Ok(Classification { verdict, masked, features })
    }
}

impl QueryClassifier for AmbiguityDetector {
    fn classify(&self, q: &Query) -> Result<AmbiguityVerdict, ClassifierError> {
        Ok(self.classify_detailed(q)?.verdict)
    }
}
