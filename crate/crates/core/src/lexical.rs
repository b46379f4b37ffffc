//! Rule-based entity masking and the lexical-ambiguity override.
//!
//! Masking runs in a fixed order: weblinks are deleted, quoted spans are
//! replaced, then every remaining token that carries a digit, period, colon,
//! underscore or dash is replaced unless it is an ordinal or a common
//! hyphenated English word. Span offsets refer to the text after weblink
//! removal.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::types::{AmbiguityLabel, AmbiguityVerdict, Query};

pub const ENTITY: &str = "ENTITY";

const DEFAULT_ENTITY_TYPES: &str = include_str!("../assets/entity_types.txt");
const DEFAULT_COMMON_WORDS: &str = include_str!("../assets/common_words.txt");

static LINK: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:https?://|\bwww\.)\S+").unwrap());
static ORDINAL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\d+(?:st|nd|rd|th)$").unwrap());
static HYPHENATED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[A-Za-z]+(?:-[A-Za-z]+)+$").unwrap());

const LEADING_PUNCT: &[char] = &['(', '[', '{', '"', '\'', '\u{2018}', '\u{201c}'];
const TRAILING_PUNCT: &[char] =
    &['?', '!', ',', ';', '.', ':', ')', ']', '}', '"', '\'', '\u{2019}', '\u{201d}'];
const LINK_TRAILING: &[char] = &['.', ',', '!', '?', ';', ':', ')', ']', '}', '"', '\''];

/// A set of lowercase words or phrases loaded from a line-oriented file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordList {
    words: BTreeSet<String>,
}

impl WordList {
    /// One entry per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase())
            .collect();
        Self { words }
    }

    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self { words: words.into_iter().map(|w| w.as_ref().trim().to_lowercase()).collect() }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Hyphenated words exempt from masking.
    pub fn default_common_words() -> Self {
        Self::parse(DEFAULT_COMMON_WORDS)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("entity-type lexicon must contain at least one entry")]
pub struct EmptyLexicon;

/// Business-object words naming entity types (segment, dataset, ...).
#[derive(Debug, Clone)]
pub struct EntityTypeLexicon {
    words: WordList,
    pattern: Regex,
}

impl EntityTypeLexicon {
    pub fn new(words: WordList) -> Result<Self, EmptyLexicon> {
        if words.is_empty() {
            return Err(EmptyLexicon);
        }
        let alternatives: Vec<String> = words
            .iter()
            .map(|w| w.split(' ').map(regex::escape).collect::<Vec<_>>().join(r"\s+"))
            .collect();
        let pattern = Regex::new(&format!(r"(?i)\b(?:{})\b", alternatives.join("|")))
            .expect("escaped alternation is a valid pattern");
        Ok(Self { words, pattern })
    }

    pub fn default_types() -> Self {
        Self::new(WordList::parse(DEFAULT_ENTITY_TYPES)).expect("bundled lexicon is non-empty")
    }

    pub fn words(&self) -> &WordList {
        &self.words
    }

    /// Whole-word, case-insensitive presence of any entry.
    pub fn mentioned_in(&self, text: &str) -> bool {
        self.pattern.is_match(text)
    }

    /// Deletes every entry occurrence and collapses the surrounding whitespace.
    pub fn remove_types(&self, text: &str) -> String {
        let stripped = self.pattern.replace_all(text, "");
        tidy_whitespace(&stripped)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpan {
    pub start: usize,
    pub end: usize,
    pub original: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedQuery {
    pub text: String,
    pub mask_count: usize,
    pub spans: Vec<MaskSpan>,
}

/// Collapses runs of whitespace and drops spaces before closing punctuation.
fn tidy_whitespace(text: &str) -> String {
    let joined = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut out = String::with_capacity(joined.len());
    for c in joined.chars() {
        if matches!(c, '?' | '!' | '.' | ',' | ';' | ':') && out.ends_with(' ') {
            out.pop();
        }
        out.push(c);
    }
    out
}

fn remove_links(text: &str) -> (String, bool) {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    let mut removed = false;
    for m in LINK.find_iter(text) {
        let link = m.as_str().trim_end_matches(LINK_TRAILING);
        let end = m.start() + link.len();
        out.push_str(&text[last..m.start()]);
        last = end;
        removed = true;
    }
    out.push_str(&text[last..]);
    if removed {
        (tidy_whitespace(&out), true)
    } else {
        (out, false)
    }
}

fn is_open_quote(c: char) -> Option<&'static [char]> {
    match c {
        '\'' | '\u{2018}' => Some(&['\'', '\u{2019}']),
        '"' | '\u{201c}' => Some(&['"', '\u{201d}']),
        _ => None,
    }
}

/// Byte ranges of quoted spans, quotes included. A quote opens only at the
/// start of a token and closes only when not followed by a letter or digit,
/// so apostrophes inside words are left alone.
fn quoted_spans(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        let opens_token = i == 0 || {
            let prev = chars[i - 1].1;
            prev.is_whitespace() || matches!(prev, '(' | '[' | '{')
        };
        if let (true, Some(closers)) = (opens_token, is_open_quote(c)) {
            let close = (i + 2..chars.len()).find(|&j| {
                closers.contains(&chars[j].1)
                    && chars.get(j + 1).is_none_or(|&(_, n)| !n.is_alphanumeric())
            });
            if let Some(j) = close {
                let end = chars[j].0 + chars[j].1.len_utf8();
                spans.push((start, end));
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    spans
}

fn token_core(token: &str) -> (usize, &str) {
    let trimmed_front = token.trim_start_matches(LEADING_PUNCT);
    let offset = token.len() - trimmed_front.len();
    (offset, trimmed_front.trim_end_matches(TRAILING_PUNCT))
}

fn is_entity_token(core: &str, common_words: &WordList) -> bool {
    if core == ENTITY || !core.chars().any(char::is_alphanumeric) {
        return false;
    }
    if ORDINAL.is_match(core) {
        return false;
    }
    if HYPHENATED.is_match(core) && common_words.contains(core) {
        return false;
    }
    core.chars().any(|c| c.is_ascii_digit() || matches!(c, '.' | ':' | '_' | '-' | '\u{2013}'))
}

fn whitespace_tokens(text: &str) -> Vec<(usize, &str)> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                tokens.push((s, &text[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push((s, &text[s..]));
    }
    tokens
}

/// Replaces `ranges` (sorted, disjoint) of `text` with [`ENTITY`] and returns
/// the new text plus a map from new-text offsets back to `text` offsets at
/// every segment boundary.
fn replace_ranges(text: &str, ranges: &[(usize, usize)]) -> (String, Vec<(usize, usize)>) {
    let mut out = String::with_capacity(text.len());
    let mut boundaries = vec![(0, 0)];
    let mut last = 0;
    for &(s, e) in ranges {
        out.push_str(&text[last..s]);
        boundaries.push((out.len(), s));
        out.push_str(ENTITY);
        boundaries.push((out.len(), e));
        last = e;
    }
    out.push_str(&text[last..]);
    (out, boundaries)
}

fn map_back(offset: usize, boundaries: &[(usize, usize)]) -> usize {
    // offsets never fall strictly inside a placeholder
    let idx = boundaries.partition_point(|&(new, _)| new <= offset) - 1;
    let (new, old) = boundaries[idx];
    old + (offset - new)
}

pub fn mask_entities(q: &Query, common_words: &WordList) -> MaskedQuery {
    mask_text(q.as_str(), common_words)
}

pub fn mask_text(text: &str, common_words: &WordList) -> MaskedQuery {
    let (cleaned, _) = remove_links(text);

    let quotes = quoted_spans(&cleaned);
    let (stage, boundaries) = replace_ranges(&cleaned, &quotes);

    let mut token_spans = Vec::new();
    for (start, token) in whitespace_tokens(&stage) {
        let (offset, core) = token_core(token);
        if is_entity_token(core, common_words) {
            let s = start + offset;
            token_spans.push((map_back(s, &boundaries), map_back(s + core.len(), &boundaries)));
        }
    }

    let mut ranges: Vec<(usize, usize)> = token_spans.clone();
    for &(qs, qe) in &quotes {
        if !token_spans.iter().any(|&(s, e)| s <= qs && qe <= e) {
            ranges.push((qs, qe));
        }
    }
    ranges.sort_unstable();

    let (text, _) = replace_ranges(&cleaned, &ranges);
    let spans: Vec<MaskSpan> = ranges
        .iter()
        .map(|&(start, end)| MaskSpan { start, end, original: cleaned[start..end].to_string() })
        .collect();
    MaskedQuery { text, mask_count: spans.len(), spans }
}

/// Escalates a `clear` model verdict to lexical ambiguity when the query
/// carries a masked entity but names no entity type. Presence of a type word
/// is checked on the original query text, so a type word inside a quoted
/// span still counts.
pub fn lexical_override(
    q: &Query,
    masked: &MaskedQuery,
    model: AmbiguityVerdict,
    lexicon: &EntityTypeLexicon,
) -> AmbiguityVerdict {
    if model.label == AmbiguityLabel::Clear
        && masked.mask_count >= 1
        && !lexicon.mentioned_in(q.as_str())
    {
        AmbiguityVerdict::lexical_override(model.score)
    } else {
        model
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{AmbiguityType, VerdictSource};
    use proptest::prelude::*;

    fn mask(s: &str) -> MaskedQuery {
        mask_text(s, &WordList::default_common_words())
    }

    fn clear(score: f64) -> AmbiguityVerdict {
        AmbiguityVerdict::from_model(score, 0.5)
    }

    #[test]
    fn masks_alphanumeric_identifier() {
        let m = mask("What is the total size of 124abcde?");
        assert_eq!(m.text, "What is the total size of ENTITY?");
        assert_eq!(m.mask_count, 1);
        assert_eq!(m.spans[0].original, "124abcde");
        assert_eq!(m.spans[0].start, 26);
    }

    #[test]
    fn plain_question_is_untouched() {
        let m = mask("What is a segment?");
        assert_eq!(m.text, "What is a segment?");
        assert_eq!(m.mask_count, 0);
    }

    #[test]
    fn quoted_span_is_masked_whole() {
        let m = mask("What is the id of 'ABC Dataset (created on)'?");
        assert_eq!(m.text, "What is the id of ENTITY?");
        assert_eq!(m.spans[0].original, "'ABC Dataset (created on)'");
    }

    #[test]
    fn links_are_deleted_not_masked() {
        let m = mask("See https://example.com/a_b?x=1 for the 2nd schema");
        assert_eq!(m.text, "See for the 2nd schema");
        assert_eq!(m.mask_count, 0);
        assert_eq!(mask("Open www.foo.io?").text, "Open?");
    }

    #[test]
    fn exemptions() {
        assert_eq!(mask("Is the pre-requisite met?").mask_count, 0);
        assert_eq!(mask("the 3RD and 21st rows").mask_count, 0);
        assert_eq!(mask("is cross-foo-bar here").mask_count, 1);
    }

    #[test]
    fn apostrophes_inside_words_do_not_quote() {
        let m = mask("What's the customer's id");
        assert_eq!(m.mask_count, 0);
    }

    #[test]
    fn override_fires_without_type_word() {
        let q = Query::new("What is the total size of 124abcde?").unwrap();
        let lex = EntityTypeLexicon::new(WordList::from_words(["segment", "dataset", "schema"]))
            .unwrap();
        let v = lexical_override(&q, &mask(q.as_str()), clear(0.2), &lex);
        assert_eq!(v.label, AmbiguityLabel::Ambiguous);
        assert_eq!(v.ambiguity_type, AmbiguityType::Lexical);
        assert_eq!(v.source, VerdictSource::LexicalOverride);
        assert_eq!(v.score, 0.2);
    }

    #[test]
    fn override_needs_a_mask() {
        let q = Query::new("What is a segment?").unwrap();
        let lex = EntityTypeLexicon::default_types();
        let v = lexical_override(&q, &mask(q.as_str()), clear(0.1), &lex);
        assert_eq!(v.label, AmbiguityLabel::Clear);
        assert_eq!(v.source, VerdictSource::Model);
    }

    #[test]
    fn type_word_inside_quotes_counts() {
        let q = Query::new("What is the id of 'ABC Dataset (created on)'?").unwrap();
        let v = lexical_override(&q, &mask(q.as_str()), clear(0.3), &EntityTypeLexicon::default_types());
        assert_eq!(v.label, AmbiguityLabel::Clear);
        assert_eq!(v.source, VerdictSource::Model);
    }

    #[test]
    fn override_never_downgrades() {
        let q = Query::new("size of 124abcde").unwrap();
        let model = AmbiguityVerdict::from_model(0.9, 0.5);
        let v = lexical_override(&q, &mask(q.as_str()), model.clone(), &EntityTypeLexicon::default_types());
        assert_eq!(v, model);
    }

    #[test]
    fn lexicon_parsing_and_phrases() {
        let words = WordList::parse("# types\nSegment\n\nbusiness   event # trailing\n");
        assert_eq!(words.iter().collect::<Vec<_>>(), vec!["business event", "segment"]);
        let lex = EntityTypeLexicon::new(words).unwrap();
        assert!(lex.mentioned_in("show the Business\tEvent list"));
        assert!(!lex.mentioned_in("segments"));
        assert_eq!(lex.remove_types("Show the segment abc_1 now?"), "Show the abc_1 now?");
        assert!(EntityTypeLexicon::new(WordList::default()).is_err());
    }

    proptest! {
        #[test]
        fn masking_is_idempotent(s in r#"[a-zA-Z0-9 '"._:\-?()/w]{0,40}"#) {
            let once = mask(&s);
            let twice = mask(&once.text);
            prop_assert_eq!(&twice.text, &once.text);
            prop_assert_eq!(once.text.matches(ENTITY).count(), once.mask_count);
        }

        #[test]
        fn links_never_become_entities(host in "[a-z]{1,8}", path in "[a-z0-9_/]{0,10}") {
            let text = format!("check https://{host}.com/{path} today");
            let m = mask(&text);
            prop_assert_eq!(m.mask_count, 0);
            prop_assert_eq!(m.text, "check today");
        }
    }
}
