//! Deterministic synthetic corpora for desk-scale training and evaluation.
//!
//! Clear queries come from templates over a small business-object vocabulary;
//! ambiguous queries are derived from them with the augmentation rules, so
//! every ambiguous query has a known clear source that serves as its golden
//! rewrite.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::augment::{augment_corpus, AugmentConfig, AugmentRule};
use crate::types::{AmbiguityLabel, DatasetRecord, Query};

const TYPES: [&str; 4] = ["segment", "dataset", "schema", "audience"];
const ATTRIBUTES: [&str; 10] = [
    "name",
    "size",
    "owner",
    "status",
    "creation date",
    "row count",
    "description",
    "refresh schedule",
    "retention policy",
    "primary key",
];
const NAMES: [&str; 24] = [
    "Loyal Customers",
    "Web Events",
    "Churn Risk",
    "Holiday Shoppers",
    "Mobile Users",
    "Email Subscribers",
    "Store Visits",
    "Premium Members",
    "Cart Abandoners",
    "Product Views",
    "New Signups",
    "Inactive Accounts",
    "High Spenders",
    "Newsletter Readers",
    "App Installs",
    "Trial Users",
    "Winback Targets",
    "Campaign Clicks",
    "Order History",
    "Support Tickets",
    "Frequent Travelers",
    "Gift Buyers",
    "Survey Responses",
    "Page Visits",
];
const IDENTS: [&str; 16] = [
    "abc_123", "cust-2024", "ds_9f3", "seg_001", "evt.v2", "x7k9", "q3_sales", "aud_55", "tbl_orders",
    "v1.4", "crm-07", "rk_88", "id:4421", "mkt_emea", "b2b-leads", "s3_raw",
];
const MONTHS: [&str; 6] = ["January", "March", "May", "July", "September", "November"];
const PEOPLE: [&str; 5] = ["Maria", "Kenji", "Priya", "Tom", "Amara"];
const FORMATS: [&str; 3] = ["CSV", "Parquet", "JSON"];

fn clear_templates() -> Vec<String> {
    let mut out = Vec::new();
    for t in TYPES {
        for a in ATTRIBUTES {
            for n in NAMES {
                out.push(format!("What is the {a} of the {n} {t}?"));
                out.push(format!("Describe the {a} of the {n} {t}"));
            }
            for i in IDENTS {
                out.push(format!("Show me the {a} of {t} {i}"));
                out.push(format!("Give me the {a} of {t} {i}"));
            }
        }
        for n in NAMES {
            out.push(format!("Tell me about the {n} {t}"));
            out.push(format!("When was the {n} {t} last updated?"));
            for f in FORMATS {
                out.push(format!("Can I export the {n} {t} to {f}?"));
            }
        }
        for m in MONTHS {
            out.push(format!("How many {t}s were created in {m}?"));
        }
        for p in PEOPLE {
            out.push(format!("List all {t}s owned by {p}"));
            out.push(format!("Show me every {t} shared with {p}"));
        }
        for i in IDENTS {
            out.push(format!("Explain how {t} {i} is refreshed"));
            out.push(format!("Who created {t} {i}?"));
        }
        out.push(format!("How do I create a new {t}?"));
        out.push(format!("What is a {t}?"));
    }
    out
}

fn take_shuffled(mut items: Vec<DatasetRecord>, n: usize, rng: &mut ChaCha8Rng) -> Vec<DatasetRecord> {
    items.shuffle(rng);
    items.truncate(n);
    items
}

/// Clear template queries plus rule-generated ambiguous queries.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub clear: Vec<DatasetRecord>,
    pub ambiguous: Vec<DatasetRecord>,
    /// Clear source text for every ambiguous query.
    pub sources: HashMap<String, String>,
}

impl SyntheticCorpus {
    /// Up to `n_clear` / `n_ambiguous` records of each class, chosen by `seed`.
    /// Ambiguous queries use the omit-details, referential-insertion and
    /// vague-statement rules; entity-type removal is left to the lexical rule.
    pub fn generate(seed: u64, n_clear: usize, n_ambiguous: usize) -> Self {
        let mut seen = HashSet::new();
        let all_clear: Vec<DatasetRecord> = clear_templates()
            .into_iter()
            .filter(|t| seen.insert(t.clone()))
            .enumerate()
            .map(|(i, t)| DatasetRecord::new(format!("c{i:04}"), Query::new(t).unwrap(), AmbiguityLabel::Clear))
            .collect();

        let cfg = AugmentConfig::new(seed).with_rules(&[
            AugmentRule::OmitDetails,
            AugmentRule::AddReferential,
            AugmentRule::VagueStatement,
        ]);
        let augmented = augment_corpus(&all_clear, &cfg);
        let by_id: HashMap<&str, &str> = all_clear.iter().map(|r| (r.id.as_str(), r.query.as_str())).collect();
        let mut sources = HashMap::new();
        for report in &augmented.reports {
            for g in &report.generated {
                sources.insert(g.as_str().to_string(), by_id[report.source_id.as_str()].to_string());
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clear = take_shuffled(all_clear, n_clear, &mut rng);
        let ambiguous = take_shuffled(augmented.records, n_ambiguous, &mut rng);
        sources.retain(|k, _| ambiguous.iter().any(|r| r.query.as_str() == k));
        Self { clear, ambiguous, sources }
    }

    pub fn all(&self) -> Vec<DatasetRecord> {
        self.clear.iter().chain(&self.ambiguous).cloned().collect()
    }

    /// Shuffles both classes together and splits by the given fractions
    /// (train, validation); the rest is the test split.
    pub fn split(&self, train: f64, validation: f64, seed: u64) -> Split {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut all = self.all();
        all.shuffle(&mut rng);
        let n = all.len();
        let n_train = (n as f64 * train).round() as usize;
        let n_val = (n as f64 * validation).round() as usize;
        let test = all.split_off(n_train + n_val);
        let validation = all.split_off(n_train);
        Split { train: all, validation, test }
    }

    /// Records carrying golden rewrites: clear queries rewrite to themselves,
    /// ambiguous ones to their clear source.
    pub fn golden_fixture(&self) -> Vec<DatasetRecord> {
        self.clear
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.golden_rewrite = Some(r.query.as_str().to_string());
                r
            })
            .chain(self.ambiguous.iter().map(|r| {
                let mut r = r.clone();
                r.golden_rewrite = Some(self.sources[r.query.as_str()].clone());
                r
            }))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<DatasetRecord>,
    pub validation: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}
