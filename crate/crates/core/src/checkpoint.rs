//! Self-describing JSON checkpoint for a trained [`ClassifierModel`].
//!
//! The file holds a format version, the model payload (flat weight arrays
//! with their shapes, scaler, embedder identity, threshold, training config)
//! and a SHA-256 checksum of the payload's canonical serialization.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{ClassifierModel, HeadWeights, TrainConfig, NUM_CLASSES};
use crate::embed::EmbedderSpec;
use crate::error::CheckpointError;
use crate::features::ScalerParams;

pub const FORMAT_VERSION: &str = "agqr-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    fn new(shape: Vec<usize>, data: &[f64]) -> Self {
        Self { shape, data: data.to_vec() }
    }

    fn check(&self, what: &str) -> Result<(), CheckpointError> {
        let expected: usize = self.shape.iter().product();
        if expected != self.data.len() {
            return Err(CheckpointError::Inconsistent(format!(
                "{what}: shape {:?} needs {expected} values, found {}",
                self.shape,
                self.data.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HeadPayload {
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
    dropout_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Payload {
    model_version: String,
    embedder: EmbedderSpec,
    scaler: ScalerParams,
    head: HeadPayload,
    threshold: f64,
    train_config: Option<TrainConfig>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: String,
    payload: Payload,
    checksum: String,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<String>,
}

fn checksum(payload: &Payload) -> String {
    let bytes = serde_json::to_vec(payload).expect("payload serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub fn save_checkpoint(model: &ClassifierModel) -> Vec<u8> {
    let h = &model.head;
    let payload = Payload {
        model_version: model.version.clone(),
        embedder: model.embedder.clone(),
        scaler: model.scaler.clone(),
        head: HeadPayload {
            w1: Tensor::new(vec![h.input_dim, h.hidden], &h.w1),
            b1: Tensor::new(vec![h.hidden], &h.b1),
            w2: Tensor::new(vec![h.hidden, NUM_CLASSES], &h.w2),
            b2: Tensor::new(vec![NUM_CLASSES], &h.b2),
            dropout_p: h.dropout_p,
        },
        threshold: model.threshold,
        train_config: model.train_config.clone(),
    };
    let file = CheckpointFile { format_version: FORMAT_VERSION.to_string(), checksum: checksum(&payload), payload };
    let mut bytes = serde_json::to_vec(&file).expect("checkpoint serializes");
    bytes.push(b'\n');
    bytes
}

pub fn load_checkpoint(bytes: &[u8]) -> Result<ClassifierModel, CheckpointError> {
    let probe: VersionProbe =
        serde_json::from_slice(bytes).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    match probe.format_version.as_deref() {
        Some(FORMAT_VERSION) => {}
        Some(other) => return Err(CheckpointError::UnsupportedVersion(other.to_string())),
        None => return Err(CheckpointError::Corrupt("missing format_version".into())),
    }
    let file: CheckpointFile =
        serde_json::from_slice(bytes).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    let computed = checksum(&file.payload);
    if computed != file.checksum {
        return Err(CheckpointError::ChecksumMismatch { expected: file.checksum, computed });
    }

    let p = file.payload;
    for (t, name) in [(&p.head.w1, "w1"), (&p.head.b1, "b1"), (&p.head.w2, "w2"), (&p.head.b2, "b2")] {
        t.check(name)?;
    }
    let (input_dim, hidden) = match p.head.w1.shape.as_slice() {
        [i, h] => (*i, *h),
        other => return Err(CheckpointError::Inconsistent(format!("w1 shape {other:?}"))),
    };
    if p.head.w2.shape != [hidden, NUM_CLASSES] || p.head.b1.shape != [hidden] || p.head.b2.shape != [NUM_CLASSES] {
        return Err(CheckpointError::Inconsistent("layer shapes disagree".into()));
    }
    let model = ClassifierModel {
        head: HeadWeights {
            input_dim,
            hidden,
            w1: p.head.w1.data,
            b1: p.head.b1.data,
            w2: p.head.w2.data,
            b2: p.head.b2.data,
            dropout_p: p.head.dropout_p,
        },
        scaler: p.scaler,
        embedder: p.embedder,
        threshold: p.threshold,
        version: p.model_version,
        train_config: p.train_config,
    };
    model.validate().map_err(CheckpointError::Inconsistent)?;
    Ok(model)
}
