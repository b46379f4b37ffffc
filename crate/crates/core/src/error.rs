use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: read failed: {message}")]
    Io { line: usize, message: String },
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: record {id:?} has an empty query")]
    EmptyQuery { line: usize, id: String },
    #[error("line {line}: duplicate record id {id:?}")]
    DuplicateId { line: usize, id: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum ScalerError {
    #[error("cannot fit a scaler on zero rows")]
    Empty,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding service unreachable: {0}")]
    Transport(String),
    #[error("embedding service timed out")]
    Timeout,
    #[error("embedding service returned status {0}")]
    Status(u16),
    #[error("embedding service returned an invalid body: {0}")]
    InvalidResponse(String),
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

impl EmbedError {
    /// Whether retrying the same request could succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            EmbedError::Transport(_) | EmbedError::Timeout => true,
            EmbedError::Status(code) => *code == 429 || *code >= 500,
            EmbedError::EmptyText
            | EmbedError::InvalidResponse(_)
            | EmbedError::DimensionMismatch { .. } => false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("vector dimension mismatch: {left} vs {right}")]
pub struct DimensionMismatch {
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error(transparent)]
    Dimension(#[from] DimensionMismatch),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("{0} must contain both clear and ambiguous records")]
    SingleClass(&'static str),
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("model expects embedder {expected:?} but got {actual:?}")]
    EmbedderMismatch { expected: String, actual: String },
    #[error(transparent)]
    Scaler(#[from] ScalerError),
}

impl ClassifierError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ClassifierError::Embed(e) if e.is_retryable())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("LLM service unreachable: {0}")]
    Transport(String),
    #[error("LLM service timed out")]
    Timeout,
    #[error("LLM service returned status {0}")]
    Status(u16),
    #[error("LLM service returned an invalid body: {0}")]
    InvalidResponse(String),
}

impl LlmError {
    pub fn is_retryable(&self) -> bool {
        match self {
            LlmError::Transport(_) | LlmError::Timeout => true,
            LlmError::Status(code) => *code == 429 || *code >= 500,
            LlmError::InvalidResponse(_) => false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewriteError {
    #[error("rewrite failed after {attempts} attempt(s): {last}")]
    Exhausted { attempts: u32, last: LlmError },
    #[error("rewriter returned an empty query")]
    EmptyRewrite,
    #[error("rewriter failed: {0}")]
    Other(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("template is missing required slot {{{0}}}")]
    MissingSlot(&'static str),
    #[error("template references unknown slot {{{0}}}")]
    UnknownSlot(String),
    #[error("unbalanced brace at byte {0}")]
    UnbalancedBrace(usize),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error(transparent)]
    Llm(#[from] RewriteError),
    #[error("response contains neither RESPONSE: CLEAR nor RESPONSE: VAGUE")]
    Unparseable,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint is not valid JSON: {0}")]
    Corrupt(String),
    #[error("unsupported checkpoint format version {0:?}")]
    UnsupportedVersion(String),
    #[error("checkpoint checksum mismatch (expected {expected}, computed {computed})")]
    ChecksumMismatch { expected: String, computed: String },
    #[error("inconsistent checkpoint: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("prediction and gold lists differ in length ({preds} vs {gold})")]
    LengthMismatch { preds: usize, gold: usize },
    #[error("cannot evaluate an empty list")]
    Empty,
    #[error("record {0:?} has no golden rewrite")]
    MissingGolden(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Dimension(#[from] DimensionMismatch),
}
