use serde::{Deserialize, Serialize};

use super::eval::{ndcg_from_scores, score_dataset};
use super::trainer::{train, Corpus};
use super::{LearningCurve, TrainConfig, BOOKING_HEAD};
use crate::data::{Dataset, RawOverride};
use crate::error::{Error, Result};
use crate::nncore::ModelParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub train_ndcg: f64,
    pub test_ndcg: f64,
    /// Generalization gap: train minus test NDCG.
    pub gap: f64,
    pub curve: LearningCurve,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdOverfitReport {
    pub without_ids: RunSummary,
    pub with_ids: RunSummary,
}

impl IdOverfitReport {
    /// Extra generalization gap caused by the listing-id embedding.
    pub fn gap_increase(&self) -> f64 {
        self.with_ids.gap - self.without_ids.gap
    }
}

/// Trains twin models that differ only in the listing-id embedding.
pub fn run_id_overfit_experiment(
    config: &TrainConfig,
    listing_id_dim: usize,
    corpus: &Corpus,
) -> Result<IdOverfitReport> {
    if listing_id_dim == 0 {
        return Err(Error::invalid("listing_id_dim must be >= 1"));
    }
    let run = |dim: Option<usize>| -> Result<RunSummary> {
        let cfg = TrainConfig {
            listing_id_dim: dim,
            ..config.clone()
        };
        let out = train(&cfg, corpus)?;
        Ok(RunSummary {
            train_ndcg: out.train_ndcg,
            test_ndcg: out.test_ndcg,
            gap: out.train_ndcg - out.test_ndcg,
            curve: out.curve,
        })
    };
    Ok(IdOverfitReport {
        without_ids: run(None)?,
        with_ids: run(Some(listing_id_dim))?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub factor: f64,
    pub ndcg: f64,
}

/// Multiplies one raw feature of the test split by each factor, re-runs the
/// frozen transforms and re-scores.
pub fn feature_scaling_stress(
    params: &ModelParams<f64>,
    corpus: &Corpus,
    feature: &str,
    factors: &[f64],
    threads: usize,
) -> Result<Vec<ScalingRow>> {
    let raw = corpus.test.raw_feature(&corpus.store, &corpus.pipeline, feature)?;
    factors
        .iter()
        .map(|&factor| {
            let over = RawOverride {
                feature: feature.to_string(),
                values: raw.iter().map(|v| v * factor).collect(),
            };
            let ds = Dataset::build_inline(&corpus.test_records, &corpus.store, &corpus.pipeline, Some(&over))?;
            let scores = score_dataset(params, &ds, BOOKING_HEAD, threads)?;
            Ok(ScalingRow {
                factor,
                ndcg: ndcg_from_scores(&ds, &scores)?.mean,
            })
        })
        .collect()
}
