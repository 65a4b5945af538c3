//! Core algorithms for turning an annotated five-image sequence into a
//! knowledge-enriched story and a conversation-starting question.
//!
//! The crate is `no_std` and needs only `alloc`. Everything that touches the
//! filesystem, the command line or wall-clock time lives in the `storyq`
//! companion crate.
//!
//! Pipeline overview:
//!
//! 1. [`termspace`] picks the most confident detections per image and predicts
//!    a term set for each image.
//! 2. [`kglink`] bridges adjacent term sets with one- or two-hop knowledge-graph
//!    paths, scores their realizations with an [`lm::NGramLm`] and inserts the
//!    lowest-perplexity bridge as a sixth term set.
//! 3. [`storygen`] decodes one sentence per term set with a repetition-penalized
//!    beam search over a [`seq2seq`] model.
//! 4. [`qgen`] samples a question from the story with temperature and nucleus
//!    filtering.
//!
//! [`evalkit`] reproduces the rank-aggregation and question-type analyses.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod corpus;
pub mod evalkit;
pub mod kglink;
pub mod lm;
pub mod qgen;
pub mod rng;
pub mod seq2seq;
pub mod storygen;
pub mod termspace;
pub mod vocab;

pub use corpus::{ImageAnnotation, QaPair, StorySample};
pub use vocab::{tokenize, Vocab};
