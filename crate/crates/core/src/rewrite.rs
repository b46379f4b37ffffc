//! Query rewriting behind a pluggable [`Rewriter`]: prompt templating, an
//! HTTP chat-completion client with retries, a deterministic lookup mock, and
//! the LLM-judge detection baseline.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::LazyLock;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{DetectError, LlmError, RewriteError, TemplateError};
use crate::sync::Semaphore;
use crate::types::{AmbiguityLabel, ChatTurn, Query, Role};

/// Number of past interactions kept as rewrite context.
pub const MAX_HISTORY: usize = 5;

pub const DEFAULT_REWRITE_TEMPLATE: &str = include_str!("../assets/rewrite_prompt.txt");
pub const DETECTION_TEMPLATE: &str = include_str!("../assets/detect_prompt.txt");

pub const REWRITE_SLOTS: &[&str] = &["snippets", "history", "query"];
pub const DETECTION_SLOTS: &[&str] = &["query"];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteContext {
    history: Vec<ChatTurn>,
    pub snippets: Vec<String>,
}

impl RewriteContext {
    /// Keeps at most the last [`MAX_HISTORY`] turns.
    pub fn new(history: Vec<ChatTurn>, snippets: Vec<String>) -> Self {
        let skip = history.len().saturating_sub(MAX_HISTORY);
        Self { history: history.into_iter().skip(skip).collect(), snippets }
    }

    pub fn history(&self) -> &[ChatTurn] {
        &self.history
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteResult {
    pub rewritten: Query,
    pub raw_response: String,
    pub latency_ms: f64,
}

pub trait Rewriter: Send + Sync {
    fn rewrite(&self, q: &Query, ctx: &RewriteContext) -> Result<RewriteResult, RewriteError>;
}

impl<R: Rewriter + ?Sized> Rewriter for std::sync::Arc<R> {
    fn rewrite(&self, q: &Query, ctx: &RewriteContext) -> Result<RewriteResult, RewriteError> {
        (**self).rewrite(q, ctx)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot(&'static str),
}

/// A text template with `{name}` slots. `{{` and `}}` are literal braces.
/// Slots are validated when the template is parsed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    segments: Vec<Segment>,
}

impl PromptTemplate {
    /// Every name in `slots` must appear at least once and no other slot may.
    pub fn parse(text: &str, slots: &[&'static str]) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut chars = text.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            match c {
                '{' if chars.peek().map(|&(_, n)| n) == Some('{') => {
                    chars.next();
                    literal.push('{');
                }
                '}' if chars.peek().map(|&(_, n)| n) == Some('}') => {
                    chars.next();
                    literal.push('}');
                }
                '{' => {
                    let rest = &text[i + 1..];
                    let close = rest.find('}').ok_or(TemplateError::UnbalancedBrace(i))?;
                    let name = &rest[..close];
                    let slot = slots
                        .iter()
                        .find(|s| **s == name)
                        .ok_or_else(|| TemplateError::UnknownSlot(name.to_string()))?;
                    if !literal.is_empty() {
                        segments.push(Segment::Literal(std::mem::take(&mut literal)));
                    }
                    segments.push(Segment::Slot(slot));
                    while chars.peek().is_some_and(|&(j, _)| j <= i + 1 + close) {
                        chars.next();
                    }
                }
                '}' => return Err(TemplateError::UnbalancedBrace(i)),
                _ => literal.push(c),
            }
        }
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        for slot in slots {
            if !segments.contains(&Segment::Slot(slot)) {
                return Err(TemplateError::MissingSlot(slot));
            }
        }
        Ok(Self { segments })
    }

    pub fn default_rewrite() -> Self {
        Self::parse(DEFAULT_REWRITE_TEMPLATE, REWRITE_SLOTS).expect("bundled template is valid")
    }

    pub fn detection() -> Self {
        Self::parse(DETECTION_TEMPLATE, DETECTION_SLOTS).expect("bundled template is valid")
    }

    /// Substitutes slot values in a single pass; values are never re-scanned.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Slot(name) => {
                    let value = values.iter().find(|(k, _)| k == name).map_or("", |(_, v)| v);
                    out.push_str(value);
                }
            }
        }
        out
    }
}

fn render_snippets(snippets: &[String]) -> String {
    if snippets.is_empty() {
        return String::new();
    }
    let mut out = String::from("Relevant passages:\n");
    for (i, s) in snippets.iter().enumerate() {
        let _ = writeln!(out, "[{}] {}", i + 1, s);
    }
    out.push('\n');
    out
}

fn render_history(history: &[ChatTurn]) -> String {
    if history.is_empty() {
        return String::new();
    }
    let mut out = String::from("Chat history (oldest first):\n");
    for turn in history {
        let who = match turn.role {
            Role::User => "User",
            Role::Assistant => "Assistant",
        };
        let _ = writeln!(out, "{who}: {}", turn.text);
    }
    out.push('\n');
    out
}

pub fn build_rewrite_prompt(template: &PromptTemplate, q: &Query, ctx: &RewriteContext) -> String {
    let snippets = render_snippets(&ctx.snippets);
    let history = render_history(ctx.history());
    template.render(&[("snippets", &snippets), ("history", &history), ("query", q.as_str())])
}

/// A text-completion backend.
pub trait Completion: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, RewriteError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub initial_backoff_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    /// Log request and response bodies. Queries may be sensitive.
    #[serde(default)]
    pub debug_bodies: bool,
}

fn default_timeout_ms() -> u64 {
    10_000
}
fn default_retries() -> u32 {
    2
}
fn default_backoff_ms() -> u64 {
    200
}
fn default_in_flight() -> usize {
    8
}

impl LlmConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            temperature: 0.0,
            timeout_ms: default_timeout_ms(),
            max_retries: default_retries(),
            initial_backoff_ms: default_backoff_ms(),
            max_in_flight: default_in_flight(),
            debug_bodies: false,
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

/// Chat-completions client (`{model, messages, temperature}` →
/// `{choices[0].message.content}`) with bounded concurrency and
/// exponential-backoff retries on retryable failures.
pub struct ChatClient {
    config: LlmConfig,
    token: Option<String>,
    agent: ureq::Agent,
    in_flight: Semaphore,
}

impl ChatClient {
    /// `token` should come from the environment, never from a config file.
    pub fn new(config: LlmConfig, token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { in_flight: Semaphore::new(config.max_in_flight.max(1)), config, token, agent }
    }

    fn attempt(&self, prompt: &str) -> Result<String, LlmError> {
        let _permit = self.in_flight.acquire();
        let body = ChatRequest {
            model: &self.config.model,
            messages: [ChatMessage { role: "user", content: prompt }],
            temperature: self.config.temperature,
        };
        if self.config.debug_bodies {
            tracing::debug!(body = %serde_json::to_string(&body).unwrap_or_default(), "llm request");
        }
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) => LlmError::Timeout,
            other => LlmError::Transport(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(LlmError::Status(status));
        }
        let text = resp.body_mut().read_to_string().map_err(|e| LlmError::Transport(e.to_string()))?;
        if self.config.debug_bodies {
            tracing::debug!(body = %text, "llm response");
        }
        let parsed: ChatResponse =
            serde_json::from_str(&text).map_err(|e| LlmError::InvalidResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| LlmError::InvalidResponse("no choices".into()))
    }
}

impl Completion for ChatClient {
    fn complete(&self, prompt: &str) -> Result<String, RewriteError> {
        let mut backoff = Duration::from_millis(self.config.initial_backoff_ms);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(prompt) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempts <= self.config.max_retries => {
                    tracing::warn!(error = %e, attempts, "llm call failed, retrying");
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
                Err(last) => return Err(RewriteError::Exhausted { attempts, last }),
            }
        }
    }
}

/// Rewrites by prompting a completion backend.
pub struct LlmRewriter<C> {
    backend: C,
    template: PromptTemplate,
}

impl<C: Completion> LlmRewriter<C> {
    pub fn new(backend: C, template: PromptTemplate) -> Self {
        Self { backend, template }
    }
}

impl<C: Completion> Rewriter for LlmRewriter<C> {
    fn rewrite(&self, q: &Query, ctx: &RewriteContext) -> Result<RewriteResult, RewriteError> {
        let started = Instant::now();
        let prompt = build_rewrite_prompt(&self.template, q, ctx);
        let raw = self.backend.complete(&prompt)?;
        let rewritten = Query::new(raw.trim()).map_err(|_| RewriteError::EmptyRewrite)?;
        Ok(RewriteResult {
            rewritten,
            raw_response: raw,
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }
}

/// Table lookup keyed by exact query text; unmapped queries are echoed.
#[derive(Debug, Clone, Default)]
pub struct MockRewriter {
    table: HashMap<String, String>,
}

impl MockRewriter {
    pub fn new(table: HashMap<String, String>) -> Self {
        Self { table }
    }

    pub fn echo() -> Self {
        Self::default()
    }

    /// Parses a JSON object mapping query text to its rewrite.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(Self::new(serde_json::from_str(text)?))
    }
}

impl Rewriter for MockRewriter {
    fn rewrite(&self, q: &Query, _ctx: &RewriteContext) -> Result<RewriteResult, RewriteError> {
        let out = self.table.get(q.as_str()).cloned().unwrap_or_else(|| q.as_str().to_string());
        let rewritten = Query::new(out.trim()).map_err(|_| RewriteError::EmptyRewrite)?;
        Ok(RewriteResult { rewritten, raw_response: out, latency_ms: 0.0 })
    }
}

static DETECTION_SENTINEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)RESPONSE:\s*(CLEAR|VAGUE)").unwrap());

/// First `RESPONSE: CLEAR` / `RESPONSE: VAGUE` sentinel wins.
pub fn parse_detection_response(text: &str) -> Result<AmbiguityLabel, DetectError> {
    let caps = DETECTION_SENTINEL.captures(text).ok_or(DetectError::Unparseable)?;
    if caps[1].eq_ignore_ascii_case("clear") {
        Ok(AmbiguityLabel::Clear)
    } else {
        Ok(AmbiguityLabel::Ambiguous)
    }
}

pub fn detection_prompt(q: &Query) -> String {
    PromptTemplate::detection().render(&[("query", q.as_str())])
}

/// LLM-judge ambiguity baseline.
pub fn llm_detect(backend: &dyn Completion, q: &Query) -> Result<AmbiguityLabel, DetectError> {
    let response = backend.complete(&detection_prompt(q))?;
    parse_detection_response(&response)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    fn q(s: &str) -> Query {
        Query::new(s).unwrap()
    }

    #[test]
    fn empty_context_renders_query_and_instructions_only() {
        let p = build_rewrite_prompt(&PromptTemplate::default_rewrite(), &q("What is it?"), &RewriteContext::default());
        assert!(p.contains("Current query: What is it?"));
        assert!(p.contains("co-reference resolution"));
        assert!(!p.contains("Chat history"));
        assert!(!p.contains("Relevant passages"));
    }

    #[test]
    fn history_window_is_five() {
        let turns: Vec<_> = (0..7).map(|i| ChatTurn::user(format!("turn-{i}"))).collect();
        let ctx = RewriteContext::new(turns, vec!["a passage".into()]);
        let p = build_rewrite_prompt(&PromptTemplate::default_rewrite(), &q("And that?"), &ctx);
        assert!(!p.contains("turn-0") && !p.contains("turn-1"));
        for i in 2..7 {
            assert!(p.contains(&format!("User: turn-{i}")));
        }
        let snip = p.find("a passage").unwrap();
        let hist = p.find("turn-2").unwrap();
        let query = p.find("And that?").unwrap();
        assert!(snip < hist && hist < query);
    }

    #[test]
    fn entity_values_are_verbatim_and_not_reinterpreted() {
        let text = "What is the id of 'ABC Dataset (created on)' and {query}?";
        let p = build_rewrite_prompt(&PromptTemplate::default_rewrite(), &q(text), &RewriteContext::default());
        assert!(p.contains(text));
    }

    #[test]
    fn template_slot_validation() {
        assert_eq!(
            PromptTemplate::parse("{query} {history}", REWRITE_SLOTS),
            Err(TemplateError::MissingSlot("snippets"))
        );
        assert_eq!(
            PromptTemplate::parse("{query}{history}{snippets}{extra}", REWRITE_SLOTS),
            Err(TemplateError::UnknownSlot("extra".into()))
        );
        assert!(matches!(PromptTemplate::parse("{query", DETECTION_SLOTS), Err(TemplateError::UnbalancedBrace(0))));
        let t = PromptTemplate::parse("{{literal}} {query}", DETECTION_SLOTS).unwrap();
        assert_eq!(t.render(&[("query", "x")]), "{literal} x");
    }

    #[test]
    fn mock_lookup_and_echo() {
        let mut table = HashMap::new();
        table.insert("What are its attributes?".to_string(), "What are the attributes of dataset 1234?".to_string());
        let mock = MockRewriter::new(table);
        let ctx = RewriteContext::default();
        assert_eq!(
            mock.rewrite(&q("What are its attributes?"), &ctx).unwrap().rewritten.as_str(),
            "What are the attributes of dataset 1234?"
        );
        assert_eq!(mock.rewrite(&q("What is a segment?"), &ctx).unwrap().rewritten.as_str(), "What is a segment?");
    }

    #[test]
    fn detection_parsing() {
        assert_eq!(parse_detection_response("RESPONSE: CLEAR"), Ok(AmbiguityLabel::Clear));
        assert_eq!(parse_detection_response("RESPONSE: VAGUE"), Ok(AmbiguityLabel::Ambiguous));
        assert_eq!(parse_detection_response("hmm\nresponse:vague\nRESPONSE: CLEAR"), Ok(AmbiguityLabel::Ambiguous));
        assert_eq!(parse_detection_response("I think it is unclear"), Err(DetectError::Unparseable));
    }

    struct Recorder(Mutex<Vec<String>>, &'static str);

    impl Completion for Recorder {
        fn complete(&self, prompt: &str) -> Result<String, RewriteError> {
            self.0.lock().unwrap().push(prompt.to_string());
            Ok(self.1.to_string())
        }
    }

    #[test]
    fn llm_detect_fills_current_question() {
        let rec = Recorder(Mutex::new(Vec::new()), "RESPONSE: VAGUE\n");
        assert_eq!(llm_detect(&rec, &q("What is it?")), Ok(AmbiguityLabel::Ambiguous));
        let prompts = rec.0.lock().unwrap();
        assert!(prompts[0].ends_with("CURRENT QUESTION:What is it?"));
        assert!(prompts[0].starts_with("You are an expert linguist."));
    }

    #[test]
    fn llm_rewriter_trims_and_rejects_empty() {
        let r = LlmRewriter::new(Recorder(Mutex::new(Vec::new()), "  What is dataset X?\n"), PromptTemplate::default_rewrite());
        let out = r.rewrite(&q("What is it?"), &RewriteContext::default()).unwrap();
        assert_eq!(out.rewritten.as_str(), "What is dataset X?");
        let empty = LlmRewriter::new(Recorder(Mutex::new(Vec::new()), "  "), PromptTemplate::default_rewrite());
        assert_eq!(empty.rewrite(&q("x"), &RewriteContext::default()).unwrap_err(), RewriteError::EmptyRewrite);
    }

    #[test]
    fn unreachable_endpoint_exhausts_retries() {
        let mut cfg = LlmConfig::new("http://127.0.0.1:9/v1/chat/completions", "m");
        cfg.max_retries = 1;
        cfg.initial_backoff_ms = 1;
        cfg.timeout_ms = 500;
        let client = ChatClient::new(cfg, None);
        match client.complete("hi") {
            Err(RewriteError::Exhausted { attempts, .. }) => assert_eq!(attempts, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
