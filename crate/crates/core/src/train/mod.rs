//! Training loops (pointwise L2, lambdarank, multi-task), evaluation and the
//! listing-id and feature-scaling experiments.

mod eval;
mod experiments;
mod trainer;

pub use eval::{
    auc, evaluate_ndcg, long_view_auc, ndcg_from_scores, random_ndcg_baseline, score_dataset, worker_threads,
    NdcgReport,
};
pub use experiments::{feature_scaling_stress, run_id_overfit_experiment, IdOverfitReport, RunSummary, ScalingRow};
pub use trainer::{
    init_model, search_columns, train, train_lambdarank, train_multitask, train_pointwise, Corpus, TrainOutcome,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::{AdamConfig, OptimizerKind};
use crate::ranking::{PairWeighting, DEFAULT_NUM_SAMPLES};

pub const BOOKING_HEAD: &str = "booking";
pub const VIEW_HEAD: &str = "long_view";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    PointwiseL2,
    Lambdarank,
    Multitask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: Objective,
    pub hidden: Vec<usize>,
    /// Pairs per step for the pairwise objectives, impressions per step for
    /// pointwise. Whole searches are added until the batch reaches this size.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub adam: AdamConfig,
    pub dropout: f64,
    /// Width of the trainable listing-id embedding; `None` leaves it out.
    pub listing_id_dim: Option<usize>,
    pub w_book: f64,
    pub w_view: f64,
    pub long_view_threshold_seconds: f64,
    pub num_samples: usize,
    pub pair_weighting: PairWeighting,
    /// Learning-curve cadence in pairs; 0 records only the first and last
    /// points.
    pub checkpoint_every_pairs: u64,
    /// Scoring threads for evaluation; 0 picks [`worker_threads`].
    pub eval_threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Lambdarank,
            hidden: vec![127, 83],
            batch_size: 200,
            epochs: 2,
            seed: 7,
            optimizer: OptimizerKind::LazyAdam,
            adam: AdamConfig::default(),
            dropout: 0.0,
            listing_id_dim: None,
            w_book: 5.0,
            w_view: 1.0,
            long_view_threshold_seconds: 60.0,
            num_samples: DEFAULT_NUM_SAMPLES,
            pair_weighting: PairWeighting::DeltaNdcg,
            checkpoint_every_pairs: 50_000,
            eval_threads: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be >= 1");
        }
        if !(self.w_book > 0.0 && self.w_view > 0.0) {
            return bad("w_book and w_view must be > 0");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if self.num_samples < 2 {
            return bad("num_samples must be >= 2");
        }
        if self.listing_id_dim == Some(0) {
            return bad("listing_id_dim must be >= 1 when set");
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0)
        {
            return bad("invalid Adam hyperparameters");
        }
        if !self.long_view_threshold_seconds.is_finite() || self.long_view_threshold_seconds < 0.0 {
            return bad("long_view_threshold_seconds must be finite and >= 0");
        }
        Ok(())
    }

    pub fn threads(&self) -> usize {
        if self.eval_threads == 0 {
            worker_threads()
        } else {
            self.eval_threads
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub pairs: u64,
    pub train_ndcg: f64,
    pub test_ndcg: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<Checkpoint>,
}

impl LearningCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("pairs,train_ndcg,test_ndcg\n");
        for p in &self.points {
            s.push_str(&format!("{},{},{}\n", p.pairs, p.train_ndcg, p.test_ndcg));
        }
        s
    }

    pub fn last(&self) -> Option<&Checkpoint> {
        self.points.last()
    }
}
