//! Small attention-based encoder-decoder shared by the term predictor, the
//! story generator and the question generator.
//!
//! Inputs carry three position signals: absolute position, the segment
//! (image or sentence) a token belongs to, and the number of segments that
//! remain after it. The last one lets a model trained on five-sentence stories
//! be asked for six.

mod graph;
mod model;
mod params;
mod train;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::TokenId;

pub use graph::{Graph, Matrix, Var};
pub use model::{argmax, Memory, Seq2Seq};
pub use params::{Adam, Grads, NamedParam, ParamStore};
pub use train::{gradient_check, gradient_check_with, learning_rate_at, GradientCheck};

/// Largest segment count a sequence may declare.
pub const MAX_SEGMENTS: u32 = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("sequence of length {len} exceeds max_positions {max}")]
    TooLong { len: usize, max: usize },
    #[error("token id {id} outside vocabulary of size {vocab}")]
    TokenOutOfRange { id: TokenId, vocab: usize },
    #[error("{count} segments exceed the declared total of {total}")]
    TooManySegments { count: usize, total: u32 },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("non-finite loss at epoch {epoch}, step {step} (pair {pair})")]
    NonFiniteLoss { epoch: usize, step: usize, pair: usize },
    #[error("checkpoint parameters do not match the configured layout: {0}")]
    LayoutMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    SelfAttention,
    RecurrentWithAttention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    /// Inner width of the position-wise feed-forward blocks.
    pub ffn_size: usize,
    pub max_positions: usize,
    pub dropout: f64,
    pub decoder_kind: DecoderKind,
    pub seed: u64,
}

impl Default for ModelConfig {
    /// Desk-scale default. `ModelConfig::full_scale` gives the published
    /// 512-wide, 2-head, 4-layer setting.
    fn default() -> Self {
        ModelConfig {
            hidden_size: 64,
            num_heads: 2,
            num_layers: 2,
            ffn_size: 128,
            max_positions: 256,
            dropout: 0.1,
            decoder_kind: DecoderKind::SelfAttention,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn full_scale() -> Self {
        ModelConfig {
            hidden_size: 512,
            num_heads: 2,
            num_layers: 4,
            ffn_size: 2048,
            max_positions: 512,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if self.hidden_size == 0 || self.num_heads == 0 || self.ffn_size == 0 {
            return bad("hidden_size, num_heads and ffn_size must be positive");
        }
        if !self.hidden_size.is_multiple_of(self.num_heads) {
            return bad("hidden_size must be divisible by num_heads");
        }
        if self.max_positions < 2 {
            return bad("max_positions must be at least 2");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    LinearDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_fraction: f64,
    pub schedule: Schedule,
    pub seed: u64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    /// Adam at 1e-3 with a constant rate, as used for the term and story
    /// models.
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 8,
            warmup_fraction: 0.0,
            schedule: Schedule::Constant,
            seed: 0,
            grad_clip: Some(1.0),
        }
    }
}

impl TrainConfig {
    /// Question-model fine-tuning: 3 epochs at 5e-5, linear decay after a
    /// 10% warmup.
    pub fn question_finetune() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            epochs: 3,
            warmup_fraction: 0.1,
            schedule: Schedule::LinearDecay,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Token ids with their segment index (1-based) and the number of segments
/// remaining after the token's own.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EncodedSequence {
    pub token_ids: Vec<TokenId>,
    pub segment_ids: Vec<u32>,
    pub length_diff_ids: Vec<u32>,
    pub total_segments: u32,
}

impl EncodedSequence {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Appends one token to segment `segment`.
    pub fn push(&mut self, token: TokenId, segment: u32) {
        self.token_ids.push(token);
        self.segment_ids.push(segment);
        self.length_diff_ids
            .push(self.total_segments.saturating_sub(segment));
    }
}

/// Flattens per-segment token lists, tagging each token with its segment
/// index and the count of segments after it.
pub fn encode_positions(
    tokens_per_segment: &[Vec<TokenId>],
    total_segments: u32,
) -> Result<EncodedSequence, ModelError> {
    if total_segments > MAX_SEGMENTS || tokens_per_segment.len() > total_segments as usize {
        return Err(ModelError::TooManySegments {
            count: tokens_per_segment.len(),
            total: total_segments,
        });
    }
    let mut seq = EncodedSequence {
        total_segments,
        ..EncodedSequence::default()
    };
    for (i, seg) in tokens_per_segment.iter().enumerate() {
        for &tok in seg {
            seq.push(tok, i as u32 + 1);
        }
    }
    Ok(seq)
}

/// One supervised example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub source: EncodedSequence,
    pub target: EncodedSequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub mean_loss: f64,
    pub learning_rate: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn six_single_token_segments() {
        let segs: Vec<Vec<TokenId>> = (0..6).map(|i| vec![10 + i]).collect();
        let e = encode_positions(&segs, 6).unwrap();
        assert_eq!(e.length_diff_ids, vec![5, 4, 3, 2, 1, 0]);
        assert_eq!(e.segment_ids, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn five_segments_start_at_four() {
        let segs: Vec<Vec<TokenId>> = (0..5).map(|i| vec![10 + i, 20 + i]).collect();
        let e = encode_positions(&segs, 5).unwrap();
        assert_eq!(e.length_diff_ids[0], 4);
        assert_eq!(*e.length_diff_ids.last().unwrap(), 0);
    }

    #[test]
    fn empty_middle_segment_is_skipped() {
        // Hand-enumerated: segment 2 contributes no tokens.
        let segs = vec![vec![7, 8], vec![], vec![9]];
        let e = encode_positions(&segs, 5).unwrap();
        assert_eq!(e.token_ids, vec![7, 8, 9]);
        assert_eq!(e.segment_ids, vec![1, 1, 3]);
        assert_eq!(e.length_diff_ids, vec![4, 4, 2]);
    }

    #[test]
    fn too_many_segments() {
        let segs = vec![vec![1]; 6];
        assert!(matches!(
            encode_positions(&segs, 5),
            Err(ModelError::TooManySegments { count: 6, total: 5 })
        ));
    }

    #[test]
    fn config_validation() {
        let c = ModelConfig {
            num_heads: 3,
            ..ModelConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(ModelConfig::full_scale().validate().is_ok());
        let t = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(t.validate().is_err());
    }
}
