//! Domain types shared across the crate and the JSON-lines dataset format.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::DatasetError;

/// A raw user query. Never empty after trimming.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct Query(String);

impl Query {
    pub fn new(text: impl Into<String>) -> Result<Self, EmptyQuery> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(EmptyQuery);
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for Query {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl<'de> Deserialize<'de> for Query {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Query::new(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("query text is empty")]
pub struct EmptyQuery;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub text: String,
}

impl ChatTurn {
    pub fn user(text: impl Into<String>) -> Self {
        Self { role: Role::User, text: text.into() }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self { role: Role::Assistant, text: text.into() }
    }
}

/// Chat history (oldest first) plus the query being routed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub turns: Vec<ChatTurn>,
    pub current: Query,
}

impl Conversation {
    pub fn new(turns: Vec<ChatTurn>, current: Query) -> Self {
        Self { turns, current }
    }

    pub fn single(current: Query) -> Self {
        Self { turns: Vec::new(), current }
    }
}

/// Keeps the last `k` turns of the history. `k` of zero is treated as one.
pub fn truncate_history(conv: &Conversation, k: usize) -> Conversation {
    let k = k.max(1);
    let skip = conv.turns.len().saturating_sub(k);
    Conversation {
        turns: conv.turns[skip..].to_vec(),
        current: conv.current.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmbiguityLabel {
    Clear,
    Ambiguous,
}

impl AmbiguityLabel {
    pub fn is_ambiguous(self) -> bool {
        matches!(self, AmbiguityLabel::Ambiguous)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AmbiguityLabel::Clear => "clear",
            AmbiguityLabel::Ambiguous => "ambiguous",
        }
    }
}

impl fmt::Display for AmbiguityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Taxonomy type attached to a verdict. The model only ever emits `Unknown`;
/// `Lexical` comes from the rule-based override.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmbiguityType {
    Pragmatic,
    Syntactic,
    Lexical,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictSource {
    Model,
    LexicalOverride,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityVerdict {
    pub label: AmbiguityLabel,
    #[serde(rename = "type")]
    pub ambiguity_type: AmbiguityType,
    /// Model probability of the ambiguous class, kept even when overridden.
    pub score: f64,
    pub source: VerdictSource,
}

impl AmbiguityVerdict {
    pub fn from_model(score: f64, threshold: f64) -> Self {
        let label = if score >= threshold {
            AmbiguityLabel::Ambiguous
        } else {
            AmbiguityLabel::Clear
        };
        Self { label, ambiguity_type: AmbiguityType::Unknown, score, source: VerdictSource::Model }
    }

    pub fn lexical_override(score: f64) -> Self {
        Self {
            label: AmbiguityLabel::Ambiguous,
            ambiguity_type: AmbiguityType::Lexical,
            score,
            source: VerdictSource::LexicalOverride,
        }
    }
}

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub id: String,
    pub query: Query,
    pub label: AmbiguityLabel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<ChatTurn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golden_rewrite: Option<String>,
}

impl DatasetRecord {
    pub fn new(id: impl Into<String>, query: Query, label: AmbiguityLabel) -> Self {
        Self { id: id.into(), query, label, history: Vec::new(), golden_rewrite: None }
    }

    pub fn conversation(&self) -> Conversation {
        Conversation::new(self.history.clone(), self.query.clone())
    }
}

/// Lenient shape used by parsing so error messages can name the offending record.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    query: String,
    label: String,
    #[serde(default)]
    history: Vec<ChatTurn>,
    #[serde(default)]
    golden_rewrite: Option<String>,
}

/// Parses a JSON-lines dataset. Blank lines are skipped; line numbers are 1-based.
pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Vec<DatasetRecord>, DatasetError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DatasetError::Io { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line)
            .map_err(|e| DatasetError::Malformed { line: line_no, message: e.to_string() })?;
        let label = match raw.label.as_str() {
            "clear" => AmbiguityLabel::Clear,
            "ambiguous" => AmbiguityLabel::Ambiguous,
            other => {
                return Err(DatasetError::UnknownLabel { line: line_no, label: other.to_string() })
            }
        };
        let query = Query::new(raw.query)
            .map_err(|_| DatasetError::EmptyQuery { line: line_no, id: raw.id.clone() })?;
        if !seen.insert(raw.id.clone()) {
            return Err(DatasetError::DuplicateId { line: line_no, id: raw.id });
        }
        out.push(DatasetRecord {
            id: raw.id,
            query,
            label,
            history: raw.history,
            golden_rewrite: raw.golden_rewrite,
        });
    }
    Ok(out)
}

pub fn parse_dataset_str(text: &str) -> Result<Vec<DatasetRecord>, DatasetError> {
    parse_dataset(text.as_bytes())
}

pub fn write_dataset<W: Write>(mut w: W, records: &[DatasetRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn dataset_to_string(records: &[DatasetRecord]) -> String {
    let mut buf = Vec::new();
    write_dataset(&mut buf, records).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}
