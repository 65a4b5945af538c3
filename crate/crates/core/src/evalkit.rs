//! Human-evaluation analyses: rank aggregation, question-type
//! distribution, a paired sign-flip test and repetition detection.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::seeded;
use crate::vocab::tokenize;

/// Minimum number of resamples for [`significance`].
pub const MIN_ITERATIONS: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no usable records")]
    Empty,
    #[error("method {0:?} does not appear in the rankings")]
    UnknownMethod(String),
    #[error("significance needs at least {MIN_ITERATIONS} iterations, got {0}")]
    TooFewIterations(usize),
    #[error("repetition check needs n >= 1 and threshold >= 2")]
    InvalidRepetition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Bucket {
    What,
    Where,
    When,
    Why,
    Who,
    How,
    Other,
}

impl Bucket {
    /// Column order of the distribution table.
    pub const ALL: [Bucket; 7] = [
        Bucket::What,
        Bucket::Where,
        Bucket::When,
        Bucket::Why,
        Bucket::Who,
        Bucket::How,
        Bucket::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::What => "What",
            Bucket::Where => "Where",
            Bucket::When => "When",
            Bucket::Why => "Why",
            Bucket::Who => "Who",
            Bucket::How => "How",
            Bucket::Other => "Other",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Bucket of the question's first token.
pub fn classify_5w1h(question: &str) -> Bucket {
    match tokenize(question).first().map(String::as_str) {
        Some("what") => Bucket::What,
        Some("where") => Bucket::Where,
        Some("when") => Bucket::When,
        Some("why") => Bucket::Why,
        Some("who") => Bucket::Who,
        Some("how") => Bucket::How,
        _ => Bucket::Other,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub sequence_id: String,
    pub method: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodDistribution {
    pub method: String,
    pub total: usize,
    /// Indexed like [`Bucket::ALL`].
    pub counts: [usize; 7],
    pub percentages: [f64; 7],
}

impl MethodDistribution {
    pub fn percentage(&self, b: Bucket) -> f64 {
        self.percentages[b.index()]
    }
}

/// Per-method bucket shares, methods in order of first appearance.
pub fn distribution(records: &[QuestionRecord]) -> Vec<MethodDistribution> {
    let mut rows: Vec<MethodDistribution> = Vec::new();
    for r in records {
        let i = match rows.iter().position(|m| m.method == r.method) {
            Some(i) => i,
            None => {
                rows.push(MethodDistribution {
                    method: r.method.clone(),
                    total: 0,
                    counts: [0; 7],
                    percentages: [0.0; 7],
                });
                rows.len() - 1
            }
        };
        rows[i].total += 1;
        rows[i].counts[classify_5w1h(&r.question).index()] += 1;
    }
    for row in &mut rows {
        for b in 0..7 {
            row.percentages[b] = 100.0 * row.counts[b] as f64 / row.total as f64;
        }
    }
    rows
}

/// One worker's ranking of every method for one sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub sequence_id: String,
    pub worker_id: String,
    pub ranks: BTreeMap<String, u32>,
}

impl RankingRecord {
    /// Whether the ranks are exactly `1..=M`.
    pub fn is_permutation(&self) -> bool {
        let m = self.ranks.len() as u32;
        let got: BTreeSet<u32> = self.ranks.values().copied().collect();
        got.len() == self.ranks.len() && got.iter().all(|&r| (1..=m).contains(&r))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRanks {
    pub method: String,
    /// `rank_counts[r - 1]` records ranked this method `r`.
    pub rank_counts: Vec<usize>,
    pub rank_percentages: Vec<f64>,
    pub avg_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRecord {
    /// 0-based position in the input.
    pub index: usize,
    pub sequence_id: String,
    pub worker_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankAggregate {
    pub n: usize,
    /// Sorted by method name.
    pub methods: Vec<MethodRanks>,
    pub rejected: Vec<RejectedRecord>,
}

impl RankAggregate {
    pub fn method(&self, name: &str) -> Option<&MethodRanks> {
        self.methods.iter().find(|m| m.method == name)
    }
}

/// Rank histogram and average rank per method. The method set comes from
/// the first valid record; records that rank a different set, or whose
/// ranks are not a permutation of `1..=M`, are rejected with a reason.
pub fn aggregate_ranks(records: &[RankingRecord]) -> Result<RankAggregate, EvalError> {
    let mut methods: Option<Vec<String>> = None;
    let mut rejected = Vec::new();
    let mut counts: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut n = 0;
    for (index, r) in records.iter().enumerate() {
        let reject = |reason: String| RejectedRecord {
            index,
            sequence_id: r.sequence_id.clone(),
            worker_id: r.worker_id.clone(),
            reason,
        };
        if !r.is_permutation() {
            let ranks: Vec<u32> = r.ranks.values().copied().collect();
            rejected.push(reject(format!("ranks {ranks:?} are not a permutation of 1..={}", r.ranks.len())));
            continue;
        }
        let names: Vec<String> = r.ranks.keys().cloned().collect();
        match &methods {
            None => {
                for m in &names {
                    counts.insert(m.clone(), alloc::vec![0; names.len()]);
                }
                methods = Some(names);
            }
            Some(expected) if *expected != names => {
                rejected.push(reject(format!("ranks methods {names:?}, expected {expected:?}")));
                continue;
            }
            Some(_) => {}
        }
        for (m, &rank) in &r.ranks {
            counts.get_mut(m).expect("method set checked")[rank as usize - 1] += 1;
        }
        n += 1;
    }
    if n == 0 {
        return Err(EvalError::Empty);
    }
    let methods = counts
        .into_iter()
        .map(|(method, rank_counts)| {
            let weighted: usize = rank_counts.iter().enumerate().map(|(i, c)| (i + 1) * c).sum();
            MethodRanks {
                method,
                rank_percentages: rank_counts.iter().map(|&c| 100.0 * c as f64 / n as f64).collect(),
                avg_rank: weighted as f64 / n as f64,
                rank_counts,
            }
        })
        .collect();
    Ok(RankAggregate { n, methods, rejected })
}

/// Per-record rank differences `rank(a) - rank(b)` over records that rank
/// both methods.
pub fn paired_differences(records: &[RankingRecord], method_a: &str, method_b: &str) -> Result<Vec<f64>, EvalError> {
    for m in [method_a, method_b] {
        if !records.iter().any(|r| r.ranks.contains_key(m)) {
            return Err(EvalError::UnknownMethod(m.to_string()));
        }
    }
    let diffs: Vec<f64> = records
        .iter()
        .filter_map(|r| Some(*r.ranks.get(method_a)? as f64 - *r.ranks.get(method_b)? as f64))
        .collect();
    if diffs.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(diffs)
}

/// Paired sign-flip permutation test on the mean rank difference. The
/// p-value is the fraction of resamples whose absolute mean difference is
/// at least the observed one.
pub fn significance(
    records: &[RankingRecord],
    method_a: &str,
    method_b: &str,
    iterations: usize,
    seed: u64,
) -> Result<f64, EvalError> {
    if iterations < MIN_ITERATIONS {
        return Err(EvalError::TooFewIterations(iterations));
    }
    let diffs = paired_differences(records, method_a, method_b)?;
    let n = diffs.len() as f64;
    let observed = (diffs.iter().sum::<f64>() / n).abs();
    let mut rng = seeded(seed);
    let mut hits = 0usize;
    for _ in 0..iterations {
        let s: f64 = diffs.iter().map(|&d| if rng.gen::<bool>() { d } else { -d }).sum();
        // Rank differences are integers, so the tolerance only absorbs
        // summation order.
        if (s / n).abs() >= observed - 1e-9 {
            hits += 1;
        }
    }
    Ok(hits as f64 / iterations as f64)
}

/// Whether some token n-gram occurs at least `threshold` times.
pub fn detect_repetition(question: &str, n: usize, threshold: usize) -> Result<bool, EvalError> {
    if n == 0 || threshold < 2 {
        return Err(EvalError::InvalidRepetition);
    }
    let tokens = tokenize(question);
    let mut counts: BTreeMap<&[String], usize> = BTreeMap::new();
    for w in tokens.windows(n) {
        let c = counts.entry(w).or_default();
        *c += 1;
        if *c >= threshold {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Rank table: one row per method with `pct%(count)` cells.
pub fn render_rank_table(agg: &RankAggregate) -> String {
    let ranks = agg.methods.first().map_or(0, |m| m.rank_counts.len());
    let mut out = String::new();
    let _ = write!(out, "{:<12}", "Method");
    for r in 1..=ranks {
        let _ = write!(out, " {:>14}", ordinal(r));
    }
    let _ = writeln!(out, " {:>9}", "Avg rank");
    for m in &agg.methods {
        let _ = write!(out, "{:<12}", m.method);
        for (c, p) in m.rank_counts.iter().zip(&m.rank_percentages) {
            let _ = write!(out, " {:>14}", format!("{p:.1}%({c})"));
        }
        let _ = writeln!(out, " {:>9.2}", m.avg_rank);
    }
    let _ = writeln!(out, "N = {}", agg.n);
    out
}

fn ordinal(r: usize) -> String {
    let suffix = match (r % 10, r % 100) {
        (1, x) if x != 11 => "st",
        (2, x) if x != 12 => "nd",
        (3, x) if x != 13 => "rd",
        _ => "th",
    };
    format!("{r}{suffix}")
}

/// Question-type table with one-decimal percentages.
pub fn render_distribution_table(rows: &[MethodDistribution]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<12}", "Method");
    for b in Bucket::ALL {
        let _ = write!(out, " {:>7}", b.as_str());
    }
    let _ = writeln!(out, " {:>6}", "N");
    for row in rows {
        let _ = write!(out, "{:<12}", row.method);
        for p in row.percentages {
            let _ = write!(out, " {:>7}", format!("{p:.1}%"));
        }
        let _ = writeln!(out, " {:>6}", row.total);
    }
    out
}
