//! Rule-based synthesis of ambiguous queries from clear ones: omitting
//! details, inserting referential words, turning imperatives into vague
//! statements, and deleting entity-type words next to masked entities.

use std::collections::{BTreeMap, HashSet};
use std::sync::LazyLock;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::features::query_length;
use crate::lexical::{mask_entities, EntityTypeLexicon, WordList};
use crate::types::{AmbiguityLabel, DatasetRecord, Query};

/// Replacement words for `the`.
pub const INSERTED_REFERENTIALS: [&str; 11] =
    ["this", "that", "those", "it", "its", "some", "others", "another", "other", "above", "previous"];

pub const VAGUE_PHRASES: [&str; 13] = [
    "there is",
    "there are",
    "there is no such",
    "there is no",
    "there are no such",
    "there are no",
    "there is not any",
    "it is",
    "it is not",
    "this is not",
    "this is",
    "that is",
    "that is not",
];

/// Clear queries up to this many words also receive referential insertion.
pub const SHORT_QUERY_MAX_WORDS: u32 = 7;
pub const DEFAULT_REPETITIONS: usize = 5;

const DEFAULT_VERBS: &str = include_str!("../assets/verbs.txt");
const DEFAULT_PRONOUNS: &str = include_str!("../assets/pronouns.txt");
const DEFAULT_LINKING: [&str; 3] = ["about", "regarding", "on"];

static THE_WORD_OF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bthe (\w+) (of)\b").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentRule {
    OmitDetails,
    AddReferential,
    VagueStatement,
    RemoveEntityType,
}

impl AugmentRule {
    pub fn as_str(self) -> &'static str {
        match self {
            AugmentRule::OmitDetails => "omit_details",
            AugmentRule::AddReferential => "add_referential",
            AugmentRule::VagueStatement => "vague_statement",
            AugmentRule::RemoveEntityType => "remove_entity_type",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationReport {
    pub rule: AugmentRule,
    pub source_id: String,
    pub generated: Vec<Query>,
}

fn is_question(text: &str) -> bool {
    text.contains('?')
}

/// Cuts the query at the `of` of the first `the <word> of` and keeps the
/// question mark if there was one.
pub fn omit_details(q: &Query) -> Option<Query> {
    let text = q.as_str();
    let caps = THE_WORD_OF.captures(text)?;
    let cut = caps.get(2).expect("group 2 always participates").start();
    let head = text[..cut].trim_end();
    let out = if text.trim_end().ends_with('?') { format!("{head}?") } else { head.to_string() };
    Query::new(out).ok().filter(|o| o != q)
}

fn match_case(template: &str, word: &str) -> String {
    if template.chars().next().is_some_and(char::is_uppercase) {
        let mut chars = word.chars();
        chars.next().map(|c| c.to_uppercase().chain(chars).collect()).unwrap_or_default()
    } else {
        word.to_string()
    }
}

fn dedup_push(out: &mut Vec<Query>, source: &Query, candidate: String) {
    if let Ok(c) = Query::new(candidate) {
        if &c != source && !out.contains(&c) {
            out.push(c);
        }
    }
}

/// Each repetition replaces one uniformly chosen `the` with a uniformly
/// chosen referential word. Duplicates are dropped.
pub fn add_referential<R: Rng + ?Sized>(q: &Query, rng: &mut R, repetitions: usize) -> Vec<Query> {
    let tokens: Vec<&str> = q.as_str().split_whitespace().collect();
    let positions: Vec<usize> =
        tokens.iter().enumerate().filter(|(_, t)| t.eq_ignore_ascii_case("the")).map(|(i, _)| i).collect();
    let mut out = Vec::new();
    if positions.is_empty() {
        return out;
    }
    for _ in 0..repetitions {
        let pos = *positions.choose(rng).expect("non-empty");
        let word = INSERTED_REFERENTIALS.choose(rng).expect("non-empty");
        let mut new_tokens: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
        new_tokens[pos] = match_case(tokens[pos], word);
        dedup_push(&mut out, q, new_tokens.join(" "));
    }
    out
}

/// Lexicons standing in for part-of-speech tags when building vague statements.
#[derive(Debug, Clone)]
pub struct VagueLexicons {
    pub verbs: WordList,
    pub pronouns: WordList,
    /// Prepositions tying the verb phrase to its object ("tell me about X");
    /// dropped together with the verb and pronoun.
    pub linking: WordList,
}

impl Default for VagueLexicons {
    fn default() -> Self {
        Self {
            verbs: WordList::parse(DEFAULT_VERBS),
            pronouns: WordList::parse(DEFAULT_PRONOUNS),
            linking: WordList::from_words(DEFAULT_LINKING),
        }
    }
}

fn bare(token: &str) -> String {
    token.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

/// For non-questions opening with `<verb> <pronoun>`, replaces those words
/// (and a following linking preposition) with a uniformly chosen vague phrase.
pub fn vague_statement<R: Rng + ?Sized>(
    q: &Query,
    rng: &mut R,
    repetitions: usize,
    lexicons: &VagueLexicons,
) -> Vec<Query> {
    let text = q.as_str();
    let mut out = Vec::new();
    if is_question(text) {
        return out;
    }
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() < 2 || !lexicons.verbs.contains(&bare(tokens[0])) || !lexicons.pronouns.contains(&bare(tokens[1])) {
        return out;
    }
    let mut rest = 2;
    if tokens.len() > 3 && lexicons.linking.contains(&bare(tokens[2])) {
        rest = 3;
    }
    for _ in 0..repetitions {
        let phrase = VAGUE_PHRASES.choose(rng).expect("non-empty");
        let mut s = match_case(tokens[0], phrase);
        for t in &tokens[rest..] {
            s.push(' ');
            s.push_str(t);
        }
        dedup_push(&mut out, q, s);
    }
    out
}

/// Deletes entity-type words from queries that also carry a masked entity.
pub fn remove_entity_type(q: &Query, lexicon: &EntityTypeLexicon, common_words: &WordList) -> Option<Query> {
    if mask_entities(q, common_words).mask_count == 0 || !lexicon.mentioned_in(q.as_str()) {
        return None;
    }
    Query::new(lexicon.remove_types(q.as_str())).ok().filter(|o| o != q)
}

#[derive(Debug, Clone)]
pub struct AugmentConfig {
    pub seed: u64,
    pub repetitions: usize,
    pub rules: Vec<AugmentRule>,
    pub vague: VagueLexicons,
    pub entity_types: EntityTypeLexicon,
    pub common_words: WordList,
}

impl AugmentConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            repetitions: DEFAULT_REPETITIONS,
            rules: vec![
                AugmentRule::OmitDetails,
                AugmentRule::AddReferential,
                AugmentRule::VagueStatement,
                AugmentRule::RemoveEntityType,
            ],
            vague: VagueLexicons::default(),
            entity_types: EntityTypeLexicon::default_types(),
            common_words: WordList::default_common_words(),
        }
    }

    pub fn with_rules(mut self, rules: &[AugmentRule]) -> Self {
        self.rules = rules.to_vec();
        self
    }

    fn enabled(&self, rule: AugmentRule) -> bool {
        self.rules.contains(&rule)
    }
}

#[derive(Debug, Clone, Default)]
pub struct AugmentOutput {
    pub records: Vec<DatasetRecord>,
    pub reports: Vec<AugmentationReport>,
}

impl AugmentOutput {
    pub fn counts(&self) -> BTreeMap<&'static str, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.reports {
            *counts.entry(r.rule.as_str()).or_insert(0) += r.generated.len();
        }
        counts
    }
}

/// Applies the enabled rules to every clear record in order. Each source
/// record draws from its own random stream, so output depends only on the
/// seed and the record's position. Generated queries duplicating any input
/// or earlier output are dropped.
pub fn augment_corpus(records: &[DatasetRecord], cfg: &AugmentConfig) -> AugmentOutput {
    let mut seen: HashSet<String> = records.iter().map(|r| r.query.as_str().to_string()).collect();
    let mut ids: HashSet<String> = records.iter().map(|r| r.id.clone()).collect();
    let mut out = AugmentOutput::default();

    for (idx, rec) in records.iter().enumerate() {
        if rec.label != AmbiguityLabel::Clear {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(idx as u64);

        let mut per_rule: Vec<(AugmentRule, Vec<Query>)> = Vec::new();
        let omitted = cfg.enabled(AugmentRule::OmitDetails).then(|| omit_details(&rec.query)).flatten();
        if let Some(o) = &omitted {
            per_rule.push((AugmentRule::OmitDetails, vec![o.clone()]));
        }
        if cfg.enabled(AugmentRule::AddReferential) {
            let mut generated = Vec::new();
            if let Some(o) = &omitted {
                generated.extend(add_referential(o, &mut rng, cfg.repetitions));
            }
            if query_length(&rec.query) <= SHORT_QUERY_MAX_WORDS {
                generated.extend(add_referential(&rec.query, &mut rng, cfg.repetitions));
            }
            per_rule.push((AugmentRule::AddReferential, generated));
        }
        if cfg.enabled(AugmentRule::VagueStatement) {
            per_rule.push((
                AugmentRule::VagueStatement,
                vague_statement(&rec.query, &mut rng, cfg.repetitions, &cfg.vague),
            ));
        }
        if cfg.enabled(AugmentRule::RemoveEntityType) {
            if let Some(r) = remove_entity_type(&rec.query, &cfg.entity_types, &cfg.common_words) {
                per_rule.push((AugmentRule::RemoveEntityType, vec![r]));
            }
        }

        for (rule, generated) in per_rule {
            let mut kept = Vec::new();
            for g in generated {
                if g == rec.query || !seen.insert(g.as_str().to_string()) {
                    continue;
                }
                let mut n = kept.len();
                let mut id = format!("{}-{}-{n}", rec.id, rule.as_str());
                while ids.contains(&id) {
                    n += 1;
                    id = format!("{}-{}-{n}", rec.id, rule.as_str());
                }
                ids.insert(id.clone());
                let mut new_rec = DatasetRecord::new(id, g.clone(), AmbiguityLabel::Ambiguous);
                new_rec.history = rec.history.clone();
                new_rec.golden_rewrite = Some(rec.query.as_str().to_string());
                out.records.push(new_rec);
                kept.push(g);
            }
            if !kept.is_empty() {
                out.reports.push(AugmentationReport { rule, source_id: rec.id.clone(), generated: kept });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::dataset_to_string;

    fn q(s: &str) -> Query {
        Query::new(s).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn omit_details_examples() {
        assert_eq!(omit_details(&q("What is the name of my largest dataset?")), Some(q("What is the name?")));
        assert_eq!(omit_details(&q("What is a segment?")), None);
        assert_eq!(omit_details(&q("Show the schema of dataset X")), Some(q("Show the schema")));
        assert_eq!(omit_details(&q("The size of it?")), Some(q("The size?")));
    }

    #[test]
    fn add_referential_can_produce_paper_example() {
        let source = q("What is the name?");
        let found = (0..50).any(|s| add_referential(&source, &mut rng(s), 5).contains(&q("What is this name?")));
        assert!(found);
        assert!(add_referential(&q("segment?"), &mut rng(0), 5).is_empty());
        assert_eq!(add_referential(&source, &mut rng(42), 5), add_referential(&source, &mut rng(42), 5));
        let outs = add_referential(&q("The size of the thing"), &mut rng(3), 20);
        assert!(outs.iter().all(|o| o.as_str().split(' ').count() == 5));
        let unique: HashSet<_> = outs.iter().collect();
        assert_eq!(unique.len(), outs.len());
    }

    #[test]
    fn vague_statement_examples() {
        let lex = VagueLexicons::default();
        let source = q("Tell me about 'ABC' dataset");
        let target = q("There is no such 'ABC' dataset");
        assert!((0..50).any(|s| vague_statement(&source, &mut rng(s), 5, &lex).contains(&target)));
        assert!(vague_statement(&q("What is a segment?"), &mut rng(0), 5, &lex).is_empty());
        assert!(vague_statement(&q("Segment overview please"), &mut rng(0), 5, &lex).is_empty());
        let outs = vague_statement(&q("Show me the schema"), &mut rng(1), 30, &lex);
        assert!(outs.contains(&q("There are no the schema")));
        assert!(outs.iter().all(|o| o.as_str().ends_with(" the schema")));
    }

    #[test]
    fn remove_entity_type_needs_mask_and_type() {
        let lex = EntityTypeLexicon::default_types();
        let cw = WordList::default_common_words();
        assert_eq!(
            remove_entity_type(&q("What is the size of dataset abc_123?"), &lex, &cw),
            Some(q("What is the size of abc_123?"))
        );
        assert_eq!(remove_entity_type(&q("What is a dataset?"), &lex, &cw), None);
        assert_eq!(remove_entity_type(&q("size of abc_123?"), &lex, &cw), None);
    }

    fn corpus() -> Vec<DatasetRecord> {
        [
            ("c1", "What is the name of my largest dataset?", AmbiguityLabel::Clear),
            ("c2", "Tell me about 'ABC' dataset", AmbiguityLabel::Clear),
            ("c3", "Show me the schema of dataset abc_123", AmbiguityLabel::Clear),
            ("a1", "What is it?", AmbiguityLabel::Ambiguous),
        ]
        .into_iter()
        .map(|(id, text, label)| DatasetRecord::new(id, q(text), label))
        .collect()
    }

    #[test]
    fn corpus_augmentation_properties() {
        let input = corpus();
        let out = augment_corpus(&input, &AugmentConfig::new(7));
        assert!(!out.records.is_empty());
        let originals: HashSet<_> = input.iter().map(|r| r.query.clone()).collect();
        for r in &out.records {
            assert_eq!(r.label, AmbiguityLabel::Ambiguous);
            assert!(!originals.contains(&r.query));
        }
        assert!(out.records.iter().any(|r| r.query.as_str() == "What is the name?"));
        assert!(out.reports.iter().all(|r| r.source_id != "a1"));
        let ids: HashSet<_> = out.records.iter().map(|r| &r.id).collect();
        assert_eq!(ids.len(), out.records.len());

        let again = augment_corpus(&input, &AugmentConfig::new(7));
        assert_eq!(dataset_to_string(&out.records), dataset_to_string(&again.records));
        assert!(augment_corpus(&[], &AugmentConfig::new(7)).records.is_empty());
        let total: usize = out.counts().values().sum();
        assert_eq!(total, out.records.len());
    }
}
