//! Detection metrics, rewrite similarity (BLEU and embedding cosine), and the
//! three-mode framework comparison.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::embed::{cosine, Embedder};
use crate::error::EvalError;
use crate::pipeline::{FrameworkMode, Pipeline, RoutingRecord};
use crate::types::{AmbiguityLabel, DatasetRecord};

/// Metrics with `ambiguous` as the positive class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub r#fn: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn classification_metrics(
    preds: &[AmbiguityLabel],
    gold: &[AmbiguityLabel],
) -> Result<ClassificationReport, EvalError> {
    if preds.len() != gold.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), gold: gold.len() });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (p, g) in preds.iter().zip(gold) {
        match (p.is_ambiguous(), g.is_ambiguous()) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    Ok(ClassificationReport {
        precision,
        recall,
        f1,
        accuracy: ratio(tp + tn, preds.len()),
        tp,
        fp,
        tn,
        r#fn: fn_,
    })
}

/// Lowercases, splits on whitespace and detaches trailing punctuation marks
/// as their own tokens.
pub fn bleu_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let lower = raw.to_lowercase();
        let word = lower.trim_end_matches(|c: char| c.is_ascii_punctuation());
        if !word.is_empty() {
            out.push(word.to_string());
        }
        out.extend(lower[word.len()..].chars().map(String::from));
    }
    out
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram precision. When the candidate has no n-grams of this order
/// the precision is 1 if the reference has none either, else 0.
fn modified_precision(cand: &[String], reference: &[String], n: usize) -> f64 {
    let c = ngram_counts(cand, n);
    let total: usize = c.values().sum();
    if total == 0 {
        return if reference.len() < n { 1.0 } else { 0.0 };
    }
    let r = ngram_counts(reference, n);
    let clipped: usize = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
    clipped as f64 / total as f64
}

fn brevity_penalty(c: usize, r: usize) -> f64 {
    if c == 0 {
        0.0
    } else if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    }
}

/// Cumulative BLEU-n: brevity penalty times the geometric mean of the clipped
/// 1..=n gram precisions. No smoothing.
pub fn bleu_n(candidate: &str, reference: &str, n: usize) -> f64 {
    let cand = bleu_tokens(candidate);
    let reference = bleu_tokens(reference);
    let bp = brevity_penalty(cand.len(), reference.len());
    let mut log_sum = 0.0;
    for k in 1..=n {
        let p = modified_precision(&cand, &reference, k);
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    bp * (log_sum / n as f64).exp()
}

/// Arithmetic mean of BLEU-1 and BLEU-2.
pub fn bleu_avg12(candidate: &str, reference: &str) -> f64 {
    (bleu_n(candidate, reference, 1) + bleu_n(candidate, reference, 2)) / 2.0
}

pub fn rewrite_similarity(
    result: &RoutingRecord,
    golden: &str,
    embedder: &dyn Embedder,
) -> Result<(f64, f64), EvalError> {
    let routed = result.routed.as_str();
    let bleu = bleu_avg12(routed, golden);
    let a = embedder.embed(routed)?;
    let b = embedder.embed(golden)?;
    Ok((bleu, cosine(&a, &b)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameworkReport {
    pub mode: FrameworkMode,
    pub mean_bleu: f64,
    pub mean_cosine: f64,
    pub n: usize,
    pub degraded_count: usize,
    pub rewrite_calls: usize,
}

/// Runs every record through each mode and averages similarity to the
/// golden rewrites. Degraded records are counted, not dropped.
pub fn compare_frameworks(
    records: &[DatasetRecord],
    pipeline: &Pipeline,
    embedder: &dyn Embedder,
) -> Result<Vec<FrameworkReport>, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let golden: Vec<&str> = records
        .iter()
        .map(|r| r.golden_rewrite.as_deref().ok_or_else(|| EvalError::MissingGolden(r.id.clone())))
        .collect::<Result<_, _>>()?;

    FrameworkMode::ALL
        .iter()
        .map(|&mode| {
            let routed = pipeline.process_batch(records, mode);
            let mut bleu = 0.0;
            let mut cos = 0.0;
            for (rec, gold) in routed.iter().zip(&golden) {
                let (b, c) = rewrite_similarity(rec, gold, embedder)?;
                bleu += b;
                cos += c;
            }
            let n = records.len();
            Ok(FrameworkReport {
                mode,
                mean_bleu: bleu / n as f64,
                mean_cosine: cos / n as f64,
                n,
                degraded_count: routed.iter().filter(|r| r.degraded).count(),
                rewrite_calls: routed.iter().filter(|r| r.rewrite_invoked).count(),
            })
        })
        .collect()
}

pub fn render_framework_table(reports: &[FrameworkReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<16} {:>6} {:>10} {:>12} {:>9} {:>9}", "mode", "n", "mean_bleu", "mean_cosine", "rewrites", "degraded");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<16} {:>6} {:>10.4} {:>12.4} {:>9} {:>9}",
            r.mode.as_str(),
            r.n,
            r.mean_bleu,
            r.mean_cosine,
            r.rewrite_calls,
            r.degraded_count
        );
    }
    out
}
