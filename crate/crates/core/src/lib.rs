//! Local coherence discriminator.
//!
//! A document's coherence is approximated by the mean score of its consecutive
//! sentence pairs. The pair scorer is a one-hidden-layer MLP over
//! `[S | T | S-T | S*T | |S-T|]`, trained with a margin ranking loss against
//! negatives drawn from the same document. A forward scorer reads `(S, T)` and
//! a separately parameterized backward scorer reads `(T, S)`; the two are
//! averaged.
//!
//! The crate also ships the evaluation harness: discrimination against
//! random permutations, sentence insertion, beam-search reconstruction with
//! Kendall's tau, the negative-coverage sweep, and article-level aggregation
//! with a one-tailed Welch t-test.

pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod rng;
pub mod synthetic;
pub mod training;

pub use corpus::{Corpus, Document, Permutation, Sentence, Token};
pub use encoder::{EmbeddingTable, EncodedDocument, SentenceEncoder, SentenceVector};
pub use error::{Error, ModelFormatError, Result};
pub use model::{BidirectionalModel, DirectionMode, FeatureMode, ScorerParams};
pub use training::{TrainConfig, TrainReport};
