//! Session-contextual learning-to-rank.
//!
//! Click-context features for search result ranking (compression distance and
//! embedding similarity against recent clicks, query-aligned reference clicks,
//! attention-based sequence encoders), a lambdaRank-trained scorer, and an
//! MRR-of-sale lift harness over a seeded synthetic session generator.
//!
//! The numeric modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below pin the `f64` instantiation the pipeline uses.

pub mod data;
pub mod datagen;
pub mod embed;
pub mod error;
pub mod eval;
pub mod features;
pub mod ltr;
pub mod ncd;
pub mod pipeline;
pub mod scalar;
pub mod seq;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Embedding vector at pipeline precision.
pub type DenseVector = embed::Vector<f64>;
/// Key → vector table at pipeline precision.
pub type EmbeddingTable = embed::EmbeddingTable<f64>;
/// Hashed text embedder producing `f64` vectors.
pub type HashEmbedder = embed::HashEmbedder;
/// Sequence encoder parameters at pipeline precision.
pub type EncoderWeights = seq::EncoderWeights<f64>;
/// Output of a sequence encoder at pipeline precision.
pub type SeqEmbedding = seq::SeqEmbedding<f64>;
/// Trained ranker at pipeline precision.
pub type RankerModel = ltr::RankerModel<f64>;
/// Per-item lambdaRank gradients at pipeline precision.
pub type LambdaSet = ltr::LambdaSet<f64>;
