//! Ambiguity-guided routing: classify the current query and send it to the
//! rewriter only when it is ambiguous. The two baseline modes (never rewrite,
//! always rewrite) are available for comparison.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier::QueryClassifier;
use crate::error::ClassifierError;
use crate::rewrite::{RewriteContext, Rewriter, MAX_HISTORY};
use crate::types::{truncate_history, AmbiguityVerdict, Conversation, DatasetRecord, Query};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameworkMode {
    NoRewrite,
    AlwaysRewrite,
    Guided,
}

impl FrameworkMode {
    pub const ALL: [FrameworkMode; 3] =
        [FrameworkMode::NoRewrite, FrameworkMode::AlwaysRewrite, FrameworkMode::Guided];

    pub fn as_str(self) -> &'static str {
        match self {
            FrameworkMode::NoRewrite => "no_rewrite",
            FrameworkMode::AlwaysRewrite => "always_rewrite",
            FrameworkMode::Guided => "guided",
        }
    }
}

impl std::str::FromStr for FrameworkMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no_rewrite" => Ok(FrameworkMode::NoRewrite),
            "always_rewrite" => Ok(FrameworkMode::AlwaysRewrite),
            "guided" => Ok(FrameworkMode::Guided),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classify_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rewrite_ms: Option<f64>,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingRecord {
    pub original: Query,
    pub mode: FrameworkMode,
    pub verdict: Option<AmbiguityVerdict>,
    pub rewrite_invoked: bool,
    pub routed: Query,
    pub degraded: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timings: StageTimings,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Routes conversations through an optional classifier and a rewriter.
#[derive(Clone)]
pub struct Pipeline {
    classifier: Option<Arc<dyn QueryClassifier>>,
    rewriter: Arc<dyn Rewriter>,
    history_window: usize,
}

impl Pipeline {
    pub fn new(classifier: Option<Arc<dyn QueryClassifier>>, rewriter: Arc<dyn Rewriter>) -> Self {
        Self { classifier, rewriter, history_window: MAX_HISTORY }
    }

    /// Clamped to `1..=MAX_HISTORY`.
    pub fn with_history_window(mut self, k: usize) -> Self {
        self.history_window = k.clamp(1, MAX_HISTORY);
        self
    }

    pub fn history_window(&self) -> usize {
        self.history_window
    }

    /// Routes one conversation. Fails only when guided mode cannot classify;
    /// rewriter failures fail open and mark the record degraded.
    pub fn process(&self, conv: &Conversation, mode: FrameworkMode) -> Result<RoutingRecord, ClassifierError> {
        let started = Instant::now();
        let original = conv.current.clone();
        let mut timings = StageTimings::default();

        let verdict = match mode {
            FrameworkMode::Guided => {
                let classifier = self.classifier.as_ref().ok_or_else(|| {
                    ClassifierError::InvalidConfig("guided mode requires a classifier".into())
                })?;
                let t = Instant::now();
                let v = classifier.classify(&original)?;
                timings.classify_ms = Some(ms_since(t));
                Some(v)
            }
            FrameworkMode::NoRewrite | FrameworkMode::AlwaysRewrite => None,
        };

        let rewrite_invoked = match mode {
            FrameworkMode::NoRewrite => false,
            FrameworkMode::AlwaysRewrite => true,
            FrameworkMode::Guided => verdict.as_ref().is_some_and(|v| v.label.is_ambiguous()),
        };

        let mut routed = original.clone();
        let mut degraded = false;
        let mut error = None;
        if rewrite_invoked {
            let window = truncate_history(conv, self.history_window);
            let ctx = RewriteContext::new(window.turns, Vec::new());
            let t = Instant::now();
            match self.rewriter.rewrite(&original, &ctx) {
                Ok(result) => routed = result.rewritten,
                Err(e) => {
                    tracing::warn!(error = %e, "rewrite failed; forwarding original query");
                    degraded = true;
                    error = Some(e.to_string());
                }
            }
            timings.rewrite_ms = Some(ms_since(t));
        }
        timings.total_ms = ms_since(started);

        Ok(RoutingRecord { original, mode, verdict, rewrite_invoked, routed, degraded, error, timings })
    }

    /// Order-preserving; a failing record is passed through unchanged with
    /// `degraded` set and the error recorded.
    pub fn process_batch(&self, records: &[DatasetRecord], mode: FrameworkMode) -> Vec<RoutingRecord> {
        records
            .iter()
            .map(|r| {
                let conv = r.conversation();
                self.process(&conv, mode).unwrap_or_else(|e| RoutingRecord {
                    original: r.query.clone(),
                    mode,
                    verdict: None,
                    rewrite_invoked: false,
                    routed: r.query.clone(),
                    degraded: true,
                    error: Some(e.to_string()),
                    timings: StageTimings::default(),
                })
            })
            .collect()
    }
}
