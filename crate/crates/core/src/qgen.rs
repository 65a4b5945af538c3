//! Question generation from a story: training-sequence format, temperature
//! and nucleus filtering, and the sampling loop with its stop rules.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::distributions::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::QaPair;
use crate::rng::seeded;
use crate::seq2seq::{
    argmax, encode_positions, EncodedSequence, EpochLoss, Memory, ModelConfig, ModelError, Seq2Seq,
    TrainConfig, TrainingPair,
};
use crate::storygen::Story;
use crate::vocab::{
    tokenize, TokenId, Vocab, BOS_ID, DELIM, DELIM_ID, EOS, EOS_ID, NEWLINE, NEWLINE_ID, PAD_ID,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QgError {
    #[error("a question-answer pair needs at least one question")]
    NoQuestions,
    #[error("text contains the reserved delimiter {DELIM}")]
    DelimiterInText,
    #[error("question model has not been trained")]
    Untrained,
    #[error("no training pairs")]
    NoTrainingData,
    #[error("invalid sampling configuration: {0}")]
    InvalidSampling(&'static str),
    #[error("distribution has no positive mass")]
    EmptyDistribution,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// `context <qg> question <newline> <eos>` as surface tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QGTrainingSequence {
    pub tokens: Vec<String>,
}

impl QGTrainingSequence {
    fn delimiter(&self) -> usize {
        self.tokens
            .iter()
            .position(|t| t == DELIM)
            .expect("training sequences hold one delimiter")
    }

    /// Context tokens followed by the delimiter.
    pub fn prompt(&self) -> &[String] {
        &self.tokens[..=self.delimiter()]
    }

    /// Question tokens followed by `<newline>` and `<eos>`.
    pub fn continuation(&self) -> &[String] {
        &self.tokens[self.delimiter() + 1..]
    }

    pub fn encode(&self, vocab: &Vocab) -> Vec<TokenId> {
        vocab.encode(&self.tokens)
    }
}

/// One training sequence per question, all sharing the context prefix.
pub fn build_training_sequence<S: AsRef<str>>(context: &str, questions: &[S]) -> Result<Vec<QGTrainingSequence>, QgError> {
    if questions.is_empty() {
        return Err(QgError::NoQuestions);
    }
    let ctx = tokenize(context);
    if ctx.iter().any(|t| t == DELIM) {
        return Err(QgError::DelimiterInText);
    }
    questions
        .iter()
        .map(|q| {
            let q = tokenize(q.as_ref());
            if q.iter().any(|t| t == DELIM) {
                return Err(QgError::DelimiterInText);
            }
            let mut tokens = ctx.clone();
            tokens.push(DELIM.to_string());
            tokens.extend(q);
            tokens.push(NEWLINE.to_string());
            tokens.push(EOS.to_string());
            Ok(QGTrainingSequence { tokens })
        })
        .collect()
}

/// `softmax(logits / t)`. Entries of `-inf` get probability zero.
pub fn apply_temperature(logits: &[f64], t: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return alloc::vec![0.0; logits.len()];
    }
    let mut out: Vec<f64> = logits.iter().map(|&l| libm::exp((l - max) / t)).collect();
    let z: f64 = out.iter().sum();
    for p in &mut out {
        *p /= z;
    }
    out
}

/// Slack for comparing accumulated mass against `p`.
const MASS_EPS: f64 = 1e-12;

/// Indices of the nucleus: the shortest run of tokens, by probability
/// descending and id ascending, whose mass reaches `p`. Zero-probability
/// tokens never enter.
pub fn nucleus_support(dist: &[f64], p: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dist.len()).filter(|&i| dist[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        dist[b]
            .partial_cmp(&dist[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut mass = 0.0;
    let mut keep = 0;
    for &i in &order {
        mass += dist[i];
        keep += 1;
        if mass >= p - MASS_EPS {
            break;
        }
    }
    order.truncate(keep);
    order
}

/// Zeroes everything outside the nucleus and renormalizes.
pub fn nucleus_filter(dist: &[f64], p: f64) -> Vec<f64> {
    let support = nucleus_support(dist, p);
    let mass: f64 = support.iter().map(|&i| dist[i]).sum();
    let mut out = alloc::vec![0.0; dist.len()];
    for i in support {
        out[i] = dist[i] / mass;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub temperature: f64,
    pub top_p: f64,
    /// Cap on generated tokens, `<newline>` included.
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            temperature: 0.6,
            top_p: 0.9,
            max_new_tokens: 26,
            seed: 0,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<(), QgError> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(QgError::InvalidSampling("temperature must be positive"));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(QgError::InvalidSampling("top_p must lie in (0, 1]"));
        }
        if self.max_new_tokens == 0 {
            return Err(QgError::InvalidSampling("max_new_tokens must be at least 1"));
        }
        Ok(())
    }
}

/// Draws one index from a distribution.
pub fn sample_index<R: rand::Rng + ?Sized>(dist: &[f64], rng: &mut R) -> Result<usize, QgError> {
    let w = WeightedIndex::new(dist).map_err(|_| QgError::EmptyDistribution)?;
    Ok(w.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Newline,
    MaxLen,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Newline => "newline",
            StopReason::MaxLen => "max_len",
        }
    }
}

/// Next-token scorer used by the sampling loop.
pub trait TokenModel {
    /// Unnormalized log-scores for the token after `generated`.
    fn next_logits(&self, generated: &[TokenId]) -> Result<Vec<f64>, QgError>;
}

/// Samples until `<newline>` or `max_new_tokens` steps. The returned
/// tokens exclude the `<newline>`.
pub fn sample_question<M: TokenModel + ?Sized>(
    model: &M,
    cfg: &SampleConfig,
) -> Result<(Vec<TokenId>, StopReason), QgError> {
    cfg.validate()?;
    let mut rng = seeded(cfg.seed);
    let mut out = Vec::new();
    for _ in 0..cfg.max_new_tokens {
        let logits = model.next_logits(&out)?;
        let dist = nucleus_filter(&apply_temperature(&logits, cfg.temperature), cfg.top_p);
        let next = sample_index(&dist, &mut rng)? as TokenId;
        if next == NEWLINE_ID {
            return Ok((out, StopReason::Newline));
        }
        out.push(next);
    }
    Ok((out, StopReason::MaxLen))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedQuestion {
    pub tokens: Vec<String>,
    pub stop_reason: StopReason,
}

/// Encoder-decoder over the training format: the encoder reads
/// `context <qg>`, the decoder writes `question <newline> <eos>`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionModel {
    pub vocab: Vocab,
    pub model: Seq2Seq,
    pub trained: bool,
}

impl QuestionModel {
    pub fn new(vocab: Vocab, config: ModelConfig) -> Result<Self, QgError> {
        let model = Seq2Seq::new(config, vocab.len())?;
        Ok(QuestionModel {
            vocab,
            model,
            trained: false,
        })
    }

    /// Vocabulary over all training sequences of `pairs` plus any extra
    /// streams (such as story text the model will be prompted with).
    pub fn for_pairs(
        pairs: &[QaPair],
        extra: &[Vec<String>],
        config: ModelConfig,
        min_count: usize,
    ) -> Result<Self, QgError> {
        let mut streams: Vec<Vec<String>> = extra.to_vec();
        for p in pairs {
            for s in build_training_sequence(&p.context, &p.questions)? {
                streams.push(s.tokens);
            }
        }
        QuestionModel::new(Vocab::build(streams, min_count), config)
    }

    fn source(&self, prompt: &[String]) -> Result<EncodedSequence, QgError> {
        Ok(encode_positions(&[self.vocab.encode(prompt)], 1)?)
    }

    pub fn training_pair(&self, seq: &QGTrainingSequence) -> Result<TrainingPair, QgError> {
        Ok(TrainingPair {
            source: self.source(seq.prompt())?,
            target: encode_positions(&[self.vocab.encode(seq.continuation())], 1)?,
        })
    }

    pub fn train(&mut self, pairs: &[QaPair], cfg: &TrainConfig) -> Result<Vec<EpochLoss>, QgError> {
        let mut examples = Vec::new();
        for p in pairs {
            for s in build_training_sequence(&p.context, &p.questions)? {
                examples.push(self.training_pair(&s)?);
            }
        }
        if examples.is_empty() {
            return Err(QgError::NoTrainingData);
        }
        let history = self.model.train(&examples, cfg)?;
        self.trained = true;
        Ok(history)
    }

    /// Binds `context <qg>` as the encoder input.
    pub fn prompt<S: AsRef<str>>(&self, context: &[S]) -> Result<PromptedQuestionModel<'_>, QgError> {
        if !self.trained {
            return Err(QgError::Untrained);
        }
        let mut prompt: Vec<String> = context.iter().map(|s| s.as_ref().to_string()).collect();
        if prompt.iter().any(|t| t == DELIM) {
            return Err(QgError::DelimiterInText);
        }
        prompt.push(DELIM.to_string());
        let memory = self.model.encode(&self.source(&prompt)?)?;
        Ok(PromptedQuestionModel { inner: self, memory })
    }

    /// Argmax decoding with the same stop rules as sampling.
    pub fn greedy<S: AsRef<str>>(&self, context: &[S], max_new_tokens: usize) -> Result<GeneratedQuestion, QgError> {
        let prompted = self.prompt(context)?;
        let mut out = Vec::new();
        for _ in 0..max_new_tokens {
            let next = argmax(&prompted.next_logits(&out)?) as TokenId;
            if next == NEWLINE_ID {
                return Ok(self.finish(&out, StopReason::Newline));
            }
            out.push(next);
        }
        Ok(self.finish(&out, StopReason::MaxLen))
    }

    fn finish(&self, ids: &[TokenId], stop_reason: StopReason) -> GeneratedQuestion {
        GeneratedQuestion {
            tokens: self.vocab.decode(ids),
            stop_reason,
        }
    }
}

/// A [`QuestionModel`] with its encoder output fixed to one context.
pub struct PromptedQuestionModel<'a> {
    inner: &'a QuestionModel,
    memory: Memory,
}

impl TokenModel for PromptedQuestionModel<'_> {
    /// Log-probabilities, with tokens that never appear inside a question
    /// masked out.
    fn next_logits(&self, generated: &[TokenId]) -> Result<Vec<f64>, QgError> {
        let prefix = encode_positions(&[generated.to_vec()], 1)?;
        let dist = self.inner.model.next_distribution(&self.memory, &prefix, 1)?;
        let mut logits: Vec<f64> = dist.into_iter().map(libm::log).collect();
        for id in [PAD_ID, BOS_ID, EOS_ID, DELIM_ID] {
            logits[id as usize] = f64::NEG_INFINITY;
        }
        Ok(logits)
    }
}

/// Samples one question for `story` under `cfg`.
pub fn generate_question(model: &QuestionModel, story: &Story, cfg: &SampleConfig) -> Result<GeneratedQuestion, QgError> {
    let prompted = model.prompt(&story.tokens())?;
    let (ids, stop_reason) = sample_question(&prompted, cfg)?;
    Ok(model.finish(&ids, stop_reason))
}
