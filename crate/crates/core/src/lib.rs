//! Ambiguity detection and ambiguity-guided query rewriting for multi-turn
//! conversational assistants.
//!
//! A query is classified by a small head over a sentence embedding and three
//! hand-crafted features, escalated by a rule-based lexical check, and sent
//! to a rewriter only when it is ambiguous.

pub mod augment;
pub mod checkpoint;
pub mod classifier;
pub mod embed;
pub mod error;
pub mod eval;
pub mod features;
pub mod lexical;
pub mod pipeline;
pub mod rewrite;
mod sync;
pub mod synthetic;
pub mod types;

pub use classifier::{AmbiguityDetector, ClassifierModel, QueryClassifier, TrainConfig};
pub use embed::{Embedder, EmbedderSpec, Embedding, HashingEmbedder};
pub use pipeline::{FrameworkMode, Pipeline, RoutingRecord};
pub use rewrite::{MockRewriter, RewriteContext, Rewriter};
pub use types::{
    AmbiguityLabel, AmbiguityType, AmbiguityVerdict, ChatTurn, Conversation, DatasetRecord, Query,
    Role, VerdictSource,
};
