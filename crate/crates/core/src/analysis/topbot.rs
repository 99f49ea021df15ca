use serde::{Deserialize, Serialize};

use super::ks::{ks_two_sample, KsResult};
use crate::error::{Error, Result};
use crate::features::{percentile_sorted, Histogram};
use crate::nncore::ModelParams;
use crate::train::{score_dataset, Corpus, BOOKING_HEAD};

pub const DEFAULT_TOPBOT_K: usize = 3;
pub const DEFAULT_TOPBOT_BINS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopBotFeature {
    pub feature: String,
    pub top: Histogram,
    /// Same edges as `top`.
    pub bottom: Histogram,
    pub top_median: f64,
    pub bottom_median: f64,
    pub ks: KsResult,
}

impl TopBotFeature {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_lo,bin_hi,top_count,bottom_count\n");
        for i in 0..self.top.counts.len() {
            s.push_str(&format!(
                "{},{},{},{}\n",
                self.top.edges[i],
                self.top.edges[i + 1],
                self.top.counts[i],
                self.bottom.counts[i]
            ));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopBotReport {
    pub k: usize,
    pub queries_scored: usize,
    /// Queries with fewer than `2k` impressions.
    pub queries_skipped: usize,
    pub features: Vec<TopBotFeature>,
}

/// Ranks each test query with the booking head and pools the raw values of
/// the top-k and bottom-k listings per feature.
pub fn topbot_report(
    params: &ModelParams<f64>,
    corpus: &Corpus,
    features: &[&str],
    k: usize,
    bins: usize,
    threads: usize,
) -> Result<TopBotReport> {
    if k < 1 {
        return Err(Error::invalid("k must be >= 1"));
    }
    if bins < 1 {
        return Err(Error::invalid("bins must be >= 1"));
    }
    let ds = &corpus.test;
    let scores = score_dataset(params, ds, BOOKING_HEAD, threads)?;
    let mut top_idx = Vec::new();
    let mut bottom_idx = Vec::new();
    let mut skipped = 0;
    let mut scored = 0;
    for s in &ds.searches {
        if s.len < 2 * k {
            skipped += 1;
            continue;
        }
        let mut order: Vec<usize> = s.range().collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then(ds.listing_ids[a].cmp(&ds.listing_ids[b]))
        });
        top_idx.extend_from_slice(&order[..k]);
        bottom_idx.extend_from_slice(&order[order.len() - k..]);
        scored += 1;
    }
    if scored == 0 {
        return Err(Error::invalid(format!(
            "no test query has at least {} impressions",
            2 * k
        )));
    }
    let mut out = Vec::with_capacity(features.len());
    for &name in features {
        let raw = ds.raw_feature(&corpus.store, &corpus.pipeline, name)?;
        let top: Vec<f64> = top_idx.iter().map(|&i| raw[i]).collect();
        let bottom: Vec<f64> = bottom_idx.iter().map(|&i| raw[i]).collect();
        let lo = top.iter().chain(&bottom).copied().fold(f64::INFINITY, f64::min);
        let hi = top.iter().chain(&bottom).copied().fold(f64::NEG_INFINITY, f64::max);
        let median = |v: &[f64]| {
            let mut s = v.to_vec();
            s.sort_by(f64::total_cmp);
            percentile_sorted(&s, 0.5)
        };
        out.push(TopBotFeature {
            feature: name.to_string(),
            top: Histogram::build(&top, lo, hi, bins),
            bottom: Histogram::build(&bottom, lo, hi, bins),
            top_median: median(&top),
            bottom_median: median(&bottom),
            ks: ks_two_sample(&top, &bottom)?,
        });
    }
    Ok(TopBotReport {
        k,
        queries_scored: scored,
        queries_skipped: skipped,
        features: out,
    })
}
