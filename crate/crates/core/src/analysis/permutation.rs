use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, RawOverride};
use crate::error::{Error, Result};
use crate::nncore::ModelParams;
use crate::rng::substream;
use crate::train::{ndcg_from_scores, score_dataset, Corpus, BOOKING_HEAD};

pub const DEFAULT_REPETITIONS: usize = 10;

pub const CORRELATION_WARNING: &str = "warning: permutation importances assume independent features. \
Correlated features share credit, so one feature's delta can look negligible while the information \
it carries is still used, and rankings built from these deltas can be misleading.";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationScope {
    /// One shuffle across every impression of the test split.
    #[default]
    Global,
    /// Shuffle within each search.
    WithinQuery,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceRow {
    pub feature: String,
    pub baseline_ndcg: f64,
    /// Mean perturbed (or ablated) NDCG.
    pub perturbed_ndcg: f64,
    /// `baseline - perturbed`.
    pub delta: f64,
    /// Range of deltas over the repetitions (or of reference retrains).
    pub noise_band: (f64, f64),
    pub repetitions: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub rows: Vec<ImportanceRow>,
    pub warning: String,
}

impl ImportanceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("feature,baseline_ndcg,perturbed_ndcg,delta,band_lo,band_hi,repetitions\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.feature, r.baseline_ndcg, r.perturbed_ndcg, r.delta, r.noise_band.0, r.noise_band.1, r.repetitions
            ));
        }
        s
    }
}

/// Shuffles one feature's raw test values `repetitions` times, reassembles
/// through the frozen transforms and rescores. The baseline goes through the
/// same assembly path, so an identity permutation gives a delta of exactly 0.
pub fn permutation_importance(
    params: &ModelParams<f64>,
    corpus: &Corpus,
    feature: &str,
    seed: u64,
    repetitions: usize,
    scope: PermutationScope,
    threads: usize,
) -> Result<ImportanceRow> {
    if repetitions == 0 {
        return Err(Error::invalid("repetitions must be >= 1"));
    }
    let raw = corpus.test.raw_feature(&corpus.store, &corpus.pipeline, feature)?;
    let ndcg_with = |values: Vec<f64>| -> Result<f64> {
        let over = RawOverride {
            feature: feature.to_string(),
            values,
        };
        let ds = Dataset::build_inline(&corpus.test_records, &corpus.store, &corpus.pipeline, Some(&over))?;
        let scores = score_dataset(params, &ds, BOOKING_HEAD, threads)?;
        Ok(ndcg_from_scores(&ds, &scores)?.mean)
    };
    let baseline = ndcg_with(raw.clone())?;
    let mut deltas = Vec::with_capacity(repetitions);
    let mut perturbed = Vec::with_capacity(repetitions);
    for rep in 0..repetitions {
        let mut rng = substream(seed, rep as u64);
        let mut values = raw.clone();
        match scope {
            PermutationScope::Global => values.shuffle(&mut rng),
            PermutationScope::WithinQuery => {
                for s in &corpus.test.searches {
                    values[s.range()].shuffle(&mut rng);
                }
            }
        }
        let p = ndcg_with(values)?;
        perturbed.push(p);
        deltas.push(baseline - p);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let lo = deltas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ImportanceRow {
        feature: feature.to_string(),
        baseline_ndcg: baseline,
        perturbed_ndcg: mean(&perturbed),
        delta: mean(&deltas),
        noise_band: (lo, hi),
        repetitions,
    })
}
