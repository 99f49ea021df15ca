//! Ranking metric and lambdarank loss.
//!
//! Every search has exactly one relevant (booked) item, so NDCG reduces to the
//! positional discount `ln 2 / ln(2 + rank)` of that item (0-based rank).

mod loss;
mod metric;
mod pairs;

pub use loss::{
    delta_ndcg_weights, lambdarank_batch_loss, pairwise_loss, sigmoid, softplus, table_ranks, BatchLoss, LogitRow,
    PairWeighting,
};
pub use metric::{expected_random_ndcg, ndcg_single_relevant, position_discount, rank_of};
pub use pairs::{build_all_pairs, build_pairs, PairSet, PairSkip, SkipCounts};

/// Default per-search row width: the booked listing plus 31 not-booked.
pub const DEFAULT_NUM_SAMPLES: usize = 32;
