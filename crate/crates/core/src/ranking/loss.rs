use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::metric::position_discount;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Logits of one search: column 0 is the booked listing, the rest are the
/// not-booked listings.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitRow<T>(Vec<T>);

impl<T: Real> LogitRow<T> {
    pub fn new(logits: Vec<T>) -> Result<Self> {
        if logits.len() < 2 {
            return Err(Error::invalid(format!(
                "logit row needs >= 2 columns, got {}",
                logits.len()
            )));
        }
        if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("logit column {i}")));
        }
        Ok(Self(logits))
    }

    pub fn logits(&self) -> &[T] {
        &self.0
    }

    pub fn booked(&self) -> T {
        self.0[0]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `|x|`.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Sigmoid cross-entropy with target 1 on `booked - not_booked`.
#[inline]
pub fn pairwise_loss<T: Real>(logit_booked: T, logit_not_booked: T) -> T {
    softplus(logit_not_booked - logit_booked)
}

/// Ranks the way the reference TensorFlow code does:
/// `N - 1 - argsort(argsort(row))` with a stable ascending sort.
///
/// Tied logits keep column order in the ascending sort, so among ties the
/// higher column index ends up with the better (smaller) rank.
pub fn table_ranks<T: Real>(row: &[T]) -> Vec<usize> {
    let n = row.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0; n];
    for (asc, &col) in order.iter().enumerate() {
        ranks[col] = n - 1 - asc;
    }
    ranks
}

/// `|discount(rank_booked) - discount(rank_i)|` for each not-booked column.
/// The weights are constants with respect to the logits.
pub fn delta_ndcg_weights<T: Real>(row: &LogitRow<T>) -> Vec<T> {
    let ranks = table_ranks(row.logits());
    let booked: T = position_discount(ranks[0]);
    ranks[1..]
        .iter()
        .map(|&r| (booked - position_discount::<T>(r)).abs())
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairWeighting {
    /// Lambdarank: weight each pair by its delta-NDCG.
    #[default]
    DeltaNdcg,
    /// Plain pairwise cross-entropy.
    Uniform,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchLoss<T> {
    pub loss: T,
    /// `d loss / d logit`, one vector per row.
    pub grads: Vec<Vec<T>>,
    pub pairs: usize,
}

/// Mean over every (row, pair) of `weight * pairwise_loss`.
pub fn lambdarank_batch_loss<T: Real>(rows: &[LogitRow<T>], weighting: PairWeighting) -> Result<BatchLoss<T>> {
    if rows.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let pairs: usize = rows.iter().map(|r| r.len() - 1).sum();
    let scale = T::one() / T::lit(pairs as f64);
    let mut total = T::zero();
    let mut grads = Vec::with_capacity(rows.len());
    for row in rows {
        let weights = match weighting {
            PairWeighting::DeltaNdcg => delta_ndcg_weights(row),
            PairWeighting::Uniform => vec![T::one(); row.len() - 1],
        };
        let l = row.logits();
        let mut g = vec![T::zero(); l.len()];
        for (i, &w) in weights.iter().enumerate() {
            let d = l[i + 1] - l[0];
            total += w * softplus(d);
            // d softplus(n - b) / d n = sigmoid(n - b)
            let s = w * sigmoid(d) * scale;
            g[0] -= s;
            g[i + 1] += s;
        }
        grads.push(g);
    }
    Ok(BatchLoss {
        loss: total * scale,
        grads,
        pairs,
    })
}
