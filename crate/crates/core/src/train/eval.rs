use crate::data::Dataset;
use crate::error::Result;
use crate::nncore::{Activations, ModelParams};
use crate::ranking::{expected_random_ndcg, ndcg_single_relevant};

/// Worker count: `RANKFORGE_THREADS` when set to a positive integer,
/// otherwise the available parallelism.
pub fn worker_threads() -> usize {
    std::env::var("RANKFORGE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn score_range(
    params: &ModelParams<f64>,
    ds: &Dataset,
    head: usize,
    range: std::ops::Range<usize>,
    out: &mut [f64],
) -> Result<()> {
    let tables = params.embeddings.len();
    let mut input = Vec::with_capacity(params.input_dim());
    let mut acts = Activations::default();
    for (i, o) in range.zip(out.iter_mut()) {
        params.gather(ds.dense_row(i), &ds.slots(i, tables), &mut input)?;
        params.forward_hidden(&input, None, &mut acts)?;
        *o = params.head_logit(head, &acts);
    }
    Ok(())
}

/// Inference scores of every impression in `ds` from one head. Work is split
/// into contiguous chunks across `threads` scoped threads.
pub fn score_dataset(params: &ModelParams<f64>, ds: &Dataset, head: &str, threads: usize) -> Result<Vec<f64>> {
    let h = params.head_index(head)?;
    let n = ds.len();
    let mut scores = vec![0.0; n];
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        score_range(params, ds, h, 0..n, &mut scores)?;
        return Ok(scores);
    }
    let chunk = n.div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = scores
            .chunks_mut(chunk)
            .enumerate()
            .map(|(t, out)| {
                let start = t * chunk;
                let end = start + out.len();
                scope.spawn(move || score_range(params, ds, h, start..end, out))
            })
            .collect();
        handles
            .into_iter()
            .try_for_each(|h| h.join().expect("scoring thread panicked"))
    })?;
    Ok(scores)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NdcgReport {
    pub mean: f64,
    /// One value per search with exactly one booking, in dataset order.
    pub per_search: Vec<f64>,
    /// Searches left out for lacking exactly one booking.
    pub skipped: usize,
}

pub fn ndcg_from_scores(ds: &Dataset, scores: &[f64]) -> Result<NdcgReport> {
    let mut per_search = Vec::with_capacity(ds.searches.len());
    let mut skipped = 0;
    for s in &ds.searches {
        match s.booked {
            Some(b) => per_search.push(ndcg_single_relevant(&scores[s.range()], b)?),
            None => skipped += 1,
        }
    }
    let mean = if per_search.is_empty() {
        0.0
    } else {
        per_search.iter().sum::<f64>() / per_search.len() as f64
    };
    Ok(NdcgReport {
        mean,
        per_search,
        skipped,
    })
}

/// Mean NDCG of the booking head over the searches with one booking.
pub fn evaluate_ndcg(params: &ModelParams<f64>, ds: &Dataset, threads: usize) -> Result<NdcgReport> {
    let scores = score_dataset(params, ds, super::BOOKING_HEAD, threads)?;
    ndcg_from_scores(ds, &scores)
}

/// Expected NDCG of a uniformly random ordering, averaged over searches.
pub fn random_ndcg_baseline(ds: &Dataset) -> f64 {
    let vals: Vec<f64> = ds
        .searches
        .iter()
        .filter(|s| s.booked.is_some())
        .map(|s| expected_random_ndcg(s.len))
        .collect();
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Area under the ROC curve (Mann-Whitney, ties get half credit). `NaN`
/// when one class is empty.
pub fn auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let (mut rank_sum, mut pos) = (0.0, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] {
                rank_sum += avg_rank;
                pos += 1;
            }
        }
        i = j + 1;
    }
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return f64::NAN;
    }
    (rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos as f64 * neg as f64)
}

/// AUC of `scores` for the long-view label (dwell >= threshold) over every
/// impression in `ds`.
pub fn long_view_auc(ds: &Dataset, scores: &[f64], threshold_seconds: f64) -> f64 {
    let labels: Vec<bool> = ds.long_view.iter().map(|&s| s as f64 >= threshold_seconds).collect();
    auc(scores, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.3, 0.4], &[false, false, true, true]), 1.0);
        assert_eq!(auc(&[0.4, 0.3, 0.2, 0.1], &[false, false, true, true]), 0.0);
        assert_eq!(auc(&[1.0, 1.0], &[true, false]), 0.5);
        assert!(auc(&[1.0, 2.0], &[true, true]).is_nan());
        // one inversion out of four pairs
        assert_eq!(auc(&[0.1, 0.3, 0.35, 0.4], &[false, true, false, true]), 0.75);
    }
}
