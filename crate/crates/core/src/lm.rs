//! Add-k smoothed n-gram language model used to rank relation realizations.
//!
//! The model predicts over every ordinary vocabulary token plus `<unk>` and
//! `<eos>`; the other specials are never outcomes. Each sequence is padded on
//! the left with `n - 1` `<bos>` tokens and closed with `<eos>`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::{is_special, TokenId, Vocab, BOS_ID, EOS_ID, UNK_ID};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LmError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order must be at least 1")]
    InvalidOrder,
    #[error("smoothing constant k must be positive and finite, got {0}")]
    InvalidSmoothing(f64),
    #[error("perplexity of an empty token sequence is undefined")]
    EmptySequence,
}

/// Anything that can rank token sequences by perplexity (lower is better).
pub trait PerplexityScorer {
    type Error;

    fn perplexity(&self, tokens: &[String]) -> Result<f64, Self::Error>;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<TokenId, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "StoredLm", from = "StoredLm")]
pub struct NGramLm {
    n: usize,
    k: f64,
    vocab: Vocab,
    counts: BTreeMap<Vec<TokenId>, ContextCounts>,
}

/// Flat form with string-free keys so the model serializes to JSON.
#[derive(Serialize, Deserialize)]
struct StoredLm {
    n: usize,
    k: f64,
    vocab: Vocab,
    counts: Vec<StoredContext>,
}

#[derive(Serialize, Deserialize)]
struct StoredContext {
    context: Vec<TokenId>,
    next: Vec<(TokenId, u64)>,
}

impl From<NGramLm> for StoredLm {
    fn from(lm: NGramLm) -> Self {
        StoredLm {
            n: lm.n,
            k: lm.k,
            vocab: lm.vocab,
            counts: lm
                .counts
                .into_iter()
                .map(|(context, c)| StoredContext {
                    context,
                    next: c.next.into_iter().collect(),
                })
                .collect(),
        }
    }
}

impl From<StoredLm> for NGramLm {
    fn from(s: StoredLm) -> Self {
        let counts = s
            .counts
            .into_iter()
            .map(|c| {
                let next: BTreeMap<TokenId, u64> = c.next.into_iter().collect();
                let total = next.values().sum();
                (c.context, ContextCounts { total, next })
            })
            .collect();
        NGramLm {
            n: s.n,
            k: s.k,
            vocab: s.vocab,
            counts,
        }
    }
}

/// Trains on `corpus` with a vocabulary of every token it contains.
pub fn train_ngram<S: AsRef<str>>(corpus: &[Vec<S>], n: usize, k: f64) -> Result<NGramLm, LmError> {
    let vocab = Vocab::build(corpus.iter().map(|s| s.iter()), 1);
    train_ngram_with_vocab(corpus, n, k, vocab)
}

/// Trains with a fixed vocabulary; tokens outside it count as `<unk>`.
pub fn train_ngram_with_vocab<S: AsRef<str>>(
    corpus: &[Vec<S>],
    n: usize,
    k: f64,
    vocab: Vocab,
) -> Result<NGramLm, LmError> {
    if n == 0 {
        return Err(LmError::InvalidOrder);
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(LmError::InvalidSmoothing(k));
    }
    if corpus.is_empty() {
        return Err(LmError::EmptyCorpus);
    }
    let mut lm = NGramLm {
        n,
        k,
        vocab,
        counts: BTreeMap::new(),
    };
    for sentence in corpus {
        let events = lm.events(sentence);
        for (context, next) in events {
            let entry = lm.counts.entry(context).or_default();
            entry.total += 1;
            *entry.next.entry(next).or_default() += 1;
        }
    }
    Ok(lm)
}

impl NGramLm {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn smoothing(&self) -> f64 {
        self.k
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// Number of tokens the model distributes probability over.
    pub fn outcome_count(&self) -> usize {
        self.vocab.tokens().filter(|(t, _)| !is_special(t)).count() + 2
    }

    /// Every outcome id in ascending order.
    pub fn outcomes(&self) -> Vec<TokenId> {
        let mut out: Vec<TokenId> = self
            .vocab
            .tokens()
            .filter(|(t, _)| !is_special(t))
            .map(|(_, id)| id)
            .collect();
        out.push(EOS_ID);
        out.push(UNK_ID);
        out.sort_unstable();
        out
    }

    fn outcome_id(&self, token: &str) -> TokenId {
        match self.vocab.id(token) {
            EOS_ID => EOS_ID,
            id if is_special(self.vocab.token(id)) => UNK_ID,
            id => id,
        }
    }

    /// `(context, next)` events of one sentence including the final `<eos>`.
    fn events<S: AsRef<str>>(&self, sentence: &[S]) -> Vec<(Vec<TokenId>, TokenId)> {
        let mut ids = vec![BOS_ID; self.n - 1];
        ids.extend(sentence.iter().map(|t| self.outcome_id(t.as_ref())));
        ids.push(EOS_ID);
        (self.n - 1..ids.len())
            .map(|i| (ids[i + 1 - self.n..i].to_vec(), ids[i]))
            .collect()
    }

    /// `p(next | context)` where `context` holds the preceding `n - 1` ids.
    pub fn prob(&self, context: &[TokenId], next: TokenId) -> f64 {
        let v = self.outcome_count() as f64;
        let (count, total) = match self.counts.get(context) {
            Some(c) => (c.next.get(&next).copied().unwrap_or(0), c.total),
            None => (0, 0),
        };
        (count as f64 + self.k) / (total as f64 + self.k * v)
    }

    /// Natural-log probability of `tokens` followed by `<eos>`.
    pub fn log_prob<S: AsRef<str>>(&self, tokens: &[S]) -> f64 {
        self.events(tokens)
            .iter()
            .map(|(ctx, next)| libm::log(self.prob(ctx, *next)))
            .sum()
    }

    /// `exp(-log_prob / N)` with `N = |tokens| + 1` (the `<eos>` counts).
    pub fn perplexity<S: AsRef<str>>(&self, tokens: &[S]) -> Result<f64, LmError> {
        if tokens.is_empty() {
            return Err(LmError::EmptySequence);
        }
        let n = (tokens.len() + 1) as f64;
        Ok(libm::exp(-self.log_prob(tokens) / n))
    }
}

impl PerplexityScorer for NGramLm {
    type Error = LmError;

    fn perplexity(&self, tokens: &[String]) -> Result<f64, LmError> {
        NGramLm::perplexity(self, tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use proptest::prelude::*;

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    fn bigram_fixture() -> NGramLm {
        train_ngram(&corpus(&["a b", "a c"]), 2, 1.0).unwrap()
    }

    #[test]
    fn add_k_bigram_by_hand() {
        let lm = bigram_fixture();
        // Outcomes: a, b, c, <unk>, <eos>.
        assert_eq!(lm.outcome_count(), 5);
        let a = lm.vocab().id("a");
        let b = lm.vocab().id("b");
        assert_eq!(lm.prob(&[a], b), 2.0 / 7.0);
        // p(a | <bos>) = (2 + 1) / (2 + 5); p(<eos> | b) = (1 + 1) / (1 + 5).
        let expected = libm::log(3.0 / 7.0) + libm::log(2.0 / 7.0) + libm::log(2.0 / 6.0);
        assert!((lm.log_prob(&["a", "b"]) - expected).abs() < 1e-15);
        let ppl = libm::exp(-expected / 3.0);
        assert!((lm.perplexity(&["a", "b"]).unwrap() - ppl).abs() / ppl < 1e-12);
    }

    #[test]
    fn empty_sequence_log_prob_is_eos_only() {
        let lm = bigram_fixture();
        let expected = libm::log(lm.prob(&[BOS_ID], EOS_ID));
        assert_eq!(lm.log_prob::<&str>(&[]), expected);
        assert_eq!(lm.perplexity::<&str>(&[]), Err(LmError::EmptySequence));
    }

    #[test]
    fn uniform_unigram_perplexity_is_outcome_count() {
        // "u" is outside the vocabulary, so every outcome (a, b, <unk>, <eos>)
        // is seen exactly once.
        let vocab = Vocab::from_tokens(["a", "b"]);
        let lm = train_ngram_with_vocab(&corpus(&["a b u"]), 1, 0.5, vocab).unwrap();
        assert_eq!(lm.outcome_count(), 4);
        for s in [&["a"][..], &["b", "a", "zzz"], &["a", "a", "a", "a", "b"]] {
            let p = lm.perplexity(s).unwrap();
            assert!((p - 4.0).abs() < 1e-12, "{p}");
        }
    }

    #[test]
    fn unigram_frequency_dominates_for_small_k() {
        let lm = train_ngram(&corpus(&["a a"]), 1, 1e-9).unwrap();
        let a = lm.vocab().id("a");
        assert!(lm.prob(&[], a) > 0.66);
        assert!(lm.prob(&[], UNK_ID) < 1e-6);
    }

    #[test]
    fn errors() {
        assert_eq!(train_ngram::<&str>(&[], 2, 1.0), Err(LmError::EmptyCorpus));
        assert_eq!(train_ngram(&corpus(&["a"]), 0, 1.0), Err(LmError::InvalidOrder));
        assert!(matches!(train_ngram(&corpus(&["a"]), 1, 0.0), Err(LmError::InvalidSmoothing(_))));
    }

    #[test]
    fn unigram_log_prob_is_additive() {
        let lm = train_ngram(&corpus(&["a b c a", "b b"]), 1, 0.1).unwrap();
        // Each log_prob adds one <eos> term, so remove the extra one.
        let eos = libm::log(lm.prob(&[], EOS_ID));
        let joined = lm.log_prob(&["a", "b", "c", "b"]);
        let split = lm.log_prob(&["a", "b"]) + lm.log_prob(&["c", "b"]) - eos;
        assert!((joined - split).abs() < 1e-12);
    }

    #[test]
    fn stored_form_roundtrips() {
        let lm = train_ngram(&corpus(&["a b c", "c b a d"]), 3, 0.1).unwrap();
        let back = NGramLm::from(StoredLm::from(lm.clone()));
        assert_eq!(back, lm);
    }

    proptest! {
        #[test]
        fn distributions_sum_to_one(
            lines in proptest::collection::vec(proptest::collection::vec(0u8..5, 0..6), 1..6),
            n in 1usize..4,
            k in 0.01f64..2.0,
        ) {
            let corpus: Vec<Vec<String>> = lines
                .iter()
                .map(|l| l.iter().map(|c| ((b'a' + c) as char).to_string()).collect())
                .collect();
            let lm = train_ngram(&corpus, n, k).unwrap();
            let outcomes = lm.outcomes();
            let mut contexts: Vec<Vec<TokenId>> = lm.counts.keys().cloned().collect();
            contexts.push(vec![UNK_ID; n - 1]);
            for ctx in contexts {
                let s: f64 = outcomes.iter().map(|&o| lm.prob(&ctx, o)).sum();
                prop_assert!((s - 1.0).abs() < 1e-9);
            }
            let probe: Vec<String> = corpus[0].clone();
            if !probe.is_empty() {
                let p = lm.perplexity(&probe).unwrap();
                prop_assert!(p >= 1.0);
                prop_assert_eq!(p, libm::exp(-lm.log_prob(&probe) / (probe.len() + 1) as f64));
            }
        }

        #[test]
        fn duplicating_a_sentence_never_raises_its_unigram_perplexity(
            lines in proptest::collection::vec(proptest::collection::vec(0u8..4, 1..5), 1..5),
            k in 0.01f64..2.0,
        ) {
            let corpus: Vec<Vec<String>> = lines
                .iter()
                .map(|l| l.iter().map(|c| ((b'a' + c) as char).to_string()).collect())
                .collect();
            // Shared vocabulary so the outcome space is fixed.
            let vocab = Vocab::from_tokens(["a", "b", "c", "d"]);
            let base = train_ngram_with_vocab(&corpus, 1, k, vocab.clone()).unwrap();
            let mut doubled = corpus.clone();
            doubled.push(corpus[0].clone());
            let more = train_ngram_with_vocab(&doubled, 1, k, vocab).unwrap();
            let before = base.perplexity(&corpus[0]).unwrap();
            let after = more.perplexity(&corpus[0]).unwrap();
            prop_assert!(after <= before * (1.0 + 1e-12));
        }
    }
}
