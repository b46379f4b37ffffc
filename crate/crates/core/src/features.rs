//! Hand-crafted query features (length, referential count, Coleman-Liau
//! readability) and the robust scaler applied to them before the classifier.

use serde::{Deserialize, Serialize};

use crate::error::ScalerError;
use crate::types::Query;

/// Words whose presence signals a reference to earlier context.
pub const REFERENTIAL_WORDS: [&str; 12] = [
    "this", "that", "those", "it", "its", "some", "others", "another", "other", "them", "above",
    "previous",
];

pub const NUM_FEATURES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub query_length: u32,
    pub referential_count: u32,
    pub coleman_liau: f64,
}

impl FeatureVector {
    pub fn of(q: &Query) -> Self {
        Self {
            query_length: query_length(q),
            referential_count: referential_count(q),
            coleman_liau: coleman_liau(q),
        }
    }

    pub fn to_array(&self) -> [f64; NUM_FEATURES] {
        [self.query_length as f64, self.referential_count as f64, self.coleman_liau]
    }
}

/// Number of whitespace-delimited tokens.
pub fn query_length(q: &Query) -> u32 {
    q.as_str().split_whitespace().count() as u32
}

/// Case-insensitive count of tokens in [`REFERENTIAL_WORDS`], ignoring
/// leading and trailing punctuation on each token.
pub fn referential_count(q: &Query) -> u32 {
    q.as_str()
        .split_whitespace()
        .map(|tok| tok.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|tok| REFERENTIAL_WORDS.contains(&tok.as_str()))
        .count() as u32
}

/// Maximal runs of `.`, `!` or `?`, floored at one.
pub fn sentence_count(text: &str) -> u32 {
    let mut runs = 0;
    let mut in_run = false;
    for c in text.chars() {
        let terminal = matches!(c, '.' | '!' | '?');
        if terminal && !in_run {
            runs += 1;
        }
        in_run = terminal;
    }
    runs.max(1)
}

pub fn letter_count(text: &str) -> u32 {
    text.chars().filter(|c| c.is_alphabetic()).count() as u32
}

/// `5.89·L/W − 30·S/W − 15.8` with L letters, W words and S sentences.
pub fn coleman_liau(q: &Query) -> f64 {
    let words = query_length(q).max(1) as f64;
    let letters = letter_count(q.as_str()) as f64;
    let sentences = sentence_count(q.as_str()) as f64;
    5.89 * letters / words - 30.0 * sentences / words - 15.8
}

/// Per-feature median and interquartile range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub median: [f64; NUM_FEATURES],
    pub iqr: [f64; NUM_FEATURES],
}

impl ScalerParams {
    /// Parameters that leave features untouched.
    pub fn identity() -> Self {
        Self { median: [0.0; NUM_FEATURES], iqr: [1.0; NUM_FEATURES] }
    }

    pub fn apply(&self, fv: &FeatureVector) -> [f64; NUM_FEATURES] {
        self.apply_raw(fv.to_array())
    }

    pub fn apply_raw(&self, raw: [f64; NUM_FEATURES]) -> [f64; NUM_FEATURES] {
        std::array::from_fn(|i| (raw[i] - self.median[i]) / self.iqr[i])
    }
}

/// Percentile with linear interpolation between order statistics of a sorted slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn fit_scaler(rows: &[FeatureVector]) -> Result<ScalerParams, ScalerError> {
    let raw: Vec<_> = rows.iter().map(FeatureVector::to_array).collect();
    fit_scaler_raw(&raw)
}

pub fn fit_scaler_raw(rows: &[[f64; NUM_FEATURES]]) -> Result<ScalerParams, ScalerError> {
    if rows.is_empty() {
        return Err(ScalerError::Empty);
    }
    let mut median = [0.0; NUM_FEATURES];
    let mut iqr = [1.0; NUM_FEATURES];
    for i in 0..NUM_FEATURES {
        let mut col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
        col.sort_by(f64::total_cmp);
        median[i] = percentile(&col, 0.5);
        let spread = percentile(&col, 0.75) - percentile(&col, 0.25);
        // zero spread would divide by zero
        iqr[i] = if spread > 0.0 { spread } else { 1.0 };
    }
    Ok(ScalerParams { median, iqr })
}

pub fn apply_scaler(params: &ScalerParams, fv: &FeatureVector) -> [f64; NUM_FEATURES] {
    params.apply(fv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(s: &str) -> Query {
        Query::new(s).unwrap()
    }

    #[test]
    fn word_counts() {
        assert_eq!(query_length(&q("How many do I have?")), 5);
        assert_eq!(query_length(&q("segment?")), 1);
        assert_eq!(query_length(&q("Business event")), 2);
        assert_eq!(query_length(&q("  spaced   out\tquery ")), 3);
    }

    #[test]
    fn referential_counts() {
        assert_eq!(referential_count(&q("What is it?")), 1);
        assert_eq!(referential_count(&q("What is a segment?")), 0);
        assert_eq!(referential_count(&q("Show me that and those")), 2);
        assert_eq!(referential_count(&q("It? THEM, (previous)")), 3);
        assert_eq!(referential_count(&q("itself thistle")), 0);
    }

    #[test]
    fn coleman_liau_hand_values() {
        assert!((coleman_liau(&q("What is a segment?")) - -2.685).abs() < 1e-9);
        assert!((coleman_liau(&q("How many do I have?")) - -5.308).abs() < 1e-9);
        assert!((coleman_liau(&q("segment?")) - -4.57).abs() < 1e-9);
    }

    #[test]
    fn sentences_floor_at_one_and_count_runs() {
        assert_eq!(sentence_count("Business event"), 1);
        assert_eq!(sentence_count("Really?! Yes."), 2);
        assert_eq!(sentence_count("wait... what?"), 2);
    }

    #[test]
    fn scaler_worked_example() {
        let raw: Vec<[f64; 3]> = [1.0, 2.0, 3.0, 4.0, 100.0].iter().map(|&v| [v, v, v]).collect();
        let p = fit_scaler_raw(&raw).unwrap();
        assert_eq!(p.median, [3.0; 3]);
        assert_eq!(p.iqr, [2.0; 3]);
        assert_eq!(p.apply_raw([3.0; 3]), [0.0; 3]);
        assert_eq!(p.apply_raw([100.0; 3]), [48.5; 3]);
        assert_eq!(p.apply_raw([1.0; 3]), [-1.0; 3]);
    }

    #[test]
    fn zero_iqr_becomes_one() {
        let raw = vec![[5.0, 1.0, 0.0]; 4];
        let p = fit_scaler_raw(&raw).unwrap();
        assert_eq!(p.iqr, [1.0; 3]);
        assert_eq!(p.apply_raw([7.0, 1.0, -2.0]), [2.0, 0.0, -2.0]);
    }

    #[test]
    fn empty_fit_fails() {
        assert_eq!(fit_scaler(&[]), Err(ScalerError::Empty));
    }

    proptest! {
        #[test]
        fn referential_never_exceeds_length(s in "[A-Za-z?.,' ]{0,40}[a-z]") {
            let query = q(&s);
            prop_assert!(referential_count(&query) <= query_length(&query));
        }

        #[test]
        fn cli_is_case_invariant(s in "[A-Za-z?.! ]{0,30}[a-z]") {
            let lower = coleman_liau(&q(&s.to_lowercase()));
            let upper = coleman_liau(&q(&s.to_uppercase()));
            prop_assert_eq!(lower, upper);
        }

        #[test]
        fn scaler_is_order_independent(mut rows in proptest::collection::vec(
            proptest::array::uniform3(-50.0f64..50.0), 1..30), seed in any::<u64>()) {
            let a = fit_scaler_raw(&rows).unwrap();
            // deterministic shuffle
            let n = rows.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                rows.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(a.clone(), fit_scaler_raw(&rows).unwrap());
            prop_assert_eq!(a.apply_raw(a.median), [0.0; 3]);
        }
    }
}
