//! Learning-to-rank toolkit for marketplace search.
//!
//! * [`nncore`]: feed-forward network engine (ReLU layers, embeddings, Adam/LazyAdam).
//! * [`ranking`]: NDCG with a single relevant item, pair construction and the
//!   delta-NDCG weighted pairwise (lambdarank) loss.
//! * [`features`]: feature statistics, normalization transforms, smoothness
//!   checks, geo offsets and hashed city x cell crosses.
//! * [`data`]: domain model, synthetic marketplace generator, binary and CSV
//!   record codecs, static feature store and example assembly.
//! * [`train`]: training loop, objectives, evaluation and learning curves.
//! * [`analysis`]: permutation importance, ablation, TopBot and the KS test.
//! * [`serve`]: model file format and the batch scorer.

pub mod analysis;
pub mod data;
pub mod error;
pub mod features;
pub mod nncore;
pub mod ranking;
pub mod rng;
pub mod scalar;
pub mod serve;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ModelParams64 = nncore::ModelParams<f64>;
pub type ModelParams32 = nncore::ModelParams<f32>;
pub type LogitRow64 = ranking::LogitRow<f64>;
