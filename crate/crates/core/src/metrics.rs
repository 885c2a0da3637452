//! Answer normalization and the EM / token-F1 correctness scores.
//!
//! The same scores serve as rollout rewards during expansion and as the
//! evaluation metrics of the agent loop.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// A correctness score in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Score(f64);

impl Score {
    pub const ZERO: Score = Score(0.0);
    pub const ONE: Score = Score(1.0);

    /// Returns `None` unless `0 <= value <= 1`.
    pub fn new(value: f64) -> Option<Score> {
        if (0.0..=1.0).contains(&value) {
            Some(Score(value))
        } else {
            None
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Arithmetic mean of a non-empty set of scores.
    pub fn mean<I: IntoIterator<Item = Score>>(scores: I) -> Option<Score> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for s in scores {
            sum += s.0;
            n += 1;
        }
        if n == 0 {
            return None;
        }
        // The mean of values in [0,1] stays in [0,1] up to rounding.
        Some(Score((sum / n as f64).clamp(0.0, 1.0)))
    }
}

impl TryFrom<f64> for Score {
    type Error = ScoreRangeError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Score::new(value).ok_or(ScoreRangeError(value))
    }
}

impl From<Score> for f64 {
    fn from(s: Score) -> f64 {
        s.0
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("score {0} outside [0, 1]")]
pub struct ScoreRangeError(pub f64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("at least one gold answer is required")]
    NoGoldAnswers,
}

/// Which correctness score turns a final answer into a reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMetric {
    #[default]
    F1,
    Em,
}

impl ScoreMetric {
    pub fn score(self, prediction: &str, gold_answers: &[String]) -> Result<Score, MetricError> {
        match self {
            ScoreMetric::F1 => f1_score(prediction, gold_answers),
            ScoreMetric::Em => exact_match(prediction, gold_answers),
        }
    }
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Lowercases, strips ASCII punctuation, drops the articles `a`/`an`/`the`
/// and collapses whitespace.
///
/// Articles are removed as whole whitespace-delimited tokens after
/// punctuation removal, so `"the-end"` becomes `"theend"`.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let mut out = String::with_capacity(no_punct.len());
    for tok in no_punct.split_whitespace() {
        if ARTICLES.contains(&tok) {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// 1.0 if the normalized prediction equals any normalized gold answer.
pub fn exact_match(prediction: &str, gold_answers: &[String]) -> Result<Score, MetricError> {
    if gold_answers.is_empty() {
        return Err(MetricError::NoGoldAnswers);
    }
    let pred = normalize_answer(prediction);
    let hit = gold_answers.iter().any(|g| normalize_answer(g) == pred);
    Ok(if hit { Score::ONE } else { Score::ZERO })
}

/// Maximum token-level F1 against the gold answers.
pub fn f1_score(prediction: &str, gold_answers: &[String]) -> Result<Score, MetricError> {
    if gold_answers.is_empty() {
        return Err(MetricError::NoGoldAnswers);
    }
    let pred = normalize_answer(prediction);
    let pred_tokens: Vec<&str> = pred.split_whitespace().collect();
    let best = gold_answers
        .iter()
        .map(|g| {
            let gold = normalize_answer(g);
            let gold_tokens: Vec<&str> = gold.split_whitespace().collect();
            token_f1(&pred_tokens, &gold_tokens)
        })
        .fold(0.0f64, f64::max);
    Ok(Score(best.clamp(0.0, 1.0)))
}

fn token_f1(pred: &[&str], gold: &[&str]) -> f64 {
    match (pred.is_empty(), gold.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let common = multiset_overlap(pred, gold);
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Size of the multiset intersection of two token lists.
fn multiset_overlap(a: &[&str], b: &[&str]) -> usize {
    let mut a_sorted: Vec<&str> = a.to_vec();
    let mut b_sorted: Vec<&str> = b.to_vec();
    a_sorted.sort_unstable();
    b_sorted.sort_unstable();
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a_sorted.len() && j < b_sorted.len() {
        match a_sorted[i].cmp(b_sorted[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}
