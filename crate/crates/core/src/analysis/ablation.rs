use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Transform;
use crate::train::{train, Corpus, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub feature: String,
    /// Test NDCG of the full model for each reference seed; the first uses
    /// the configured seed.
    pub reference_ndcg: Vec<f64>,
    /// Test NDCG of the model retrained without the feature (configured seed).
    pub ablated_ndcg: f64,
    /// First reference minus ablated.
    pub delta: f64,
    /// Max minus min of the reference NDCGs.
    pub noise_band: f64,
}

impl AblationReport {
    pub fn exceeds_noise(&self) -> bool {
        self.delta.abs() > self.noise_band
    }
}

/// Corpus whose pipeline zeroes `feature`: same input width, same
/// initialization, no information from the feature.
pub(crate) fn without_feature(corpus: &Corpus, feature: &str) -> Result<Corpus> {
    let mut pipeline = corpus.pipeline.clone();
    pipeline
        .spec_mut(feature)
        .ok_or_else(|| Error::UnknownFeature(feature.to_string()))?
        .transform = Transform::Drop;
    Corpus::new(
        pipeline,
        corpus.store.clone(),
        corpus.train_records.clone(),
        corpus.test_records.clone(),
    )
}

/// Retrains without `feature` and compares against `references` (at least
/// 3) full-model retrains with seeds `config.seed, config.seed + 1, ...`.
pub fn ablation_run(config: &TrainConfig, corpus: &Corpus, feature: &str, references: usize) -> Result<AblationReport> {
    if references < 3 {
        return Err(Error::invalid("ablation needs at least 3 reference retrains"));
    }
    let ablated_corpus = without_feature(corpus, feature)?;
    let reference_ndcg = (0..references as u64)
        .map(|k| {
            let cfg = TrainConfig {
                seed: config.seed.wrapping_add(k),
                ..config.clone()
            };
            Ok(train(&cfg, corpus)?.test_ndcg)
        })
        .collect::<Result<Vec<_>>>()?;
    let ablated_ndcg = train(config, &ablated_corpus)?.test_ndcg;
    let hi = reference_ndcg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = reference_ndcg.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(AblationReport {
        feature: feature.to_string(),
        delta: reference_ndcg[0] - ablated_ndcg,
        reference_ndcg,
        ablated_ndcg,
        noise_band: hi - lo,
    })
}
