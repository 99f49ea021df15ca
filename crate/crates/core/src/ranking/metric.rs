use crate::error::{Error, Result};
use crate::scalar::Real;

/// `ln 2 / ln(2 + rank0)`; 1 at the top, strictly decreasing.
#[inline]
pub fn position_discount<T: Real>(rank0: usize) -> T {
    T::lit(std::f64::consts::LN_2 / (2.0 + rank0 as f64).ln())
}

/// 0-based rank of `idx` under a descending sort of `scores`. Ties go to the
/// lower original index.
pub fn rank_of<T: Real>(scores: &[T], idx: usize) -> usize {
    let s = scores[idx];
    scores
        .iter()
        .enumerate()
        .filter(|&(j, &v)| v > s || (v == s && j < idx))
        .count()
}

/// NDCG of a list with one relevant item. The ideal DCG is 1, so this is the
/// discount at the relevant item's rank.
pub fn ndcg_single_relevant<T: Real>(scores: &[T], booked_index: usize) -> Result<T> {
    if scores.is_empty() {
        return Err(Error::invalid("ndcg of an empty score list"));
    }
    if booked_index >= scores.len() {
        return Err(Error::invalid(format!(
            "booked index {booked_index} out of range for {} scores",
            scores.len()
        )));
    }
    if let Some(i) = scores.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("score at index {i}")));
    }
    Ok(position_discount(rank_of(scores, booked_index)))
}

/// Expected NDCG of a uniformly random ordering of `n` items: the mean of the
/// first `n` discounts.
pub fn expected_random_ndcg(n: usize) -> f64 {
    (0..n).map(position_discount::<f64>).sum::<f64>() / n as f64
}
