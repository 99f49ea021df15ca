use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::eval::{evaluate_ndcg, long_view_auc, score_dataset};
use super::{Checkpoint, LearningCurve, Objective, TrainConfig, BOOKING_HEAD, VIEW_HEAD};
use crate::data::{
    split_by_query_hash, Dataset, FeaturePipeline, Listing, PipelineConfig, RecordSchema, SearchRecord, SearchSpan,
    StaticFeatureStore,
};
use crate::error::{Error, Result};
use crate::nncore::{
    adam_step, dropout_mask, lazy_adam_step, Activations, Architecture, Gradients, ModelParams, OptimizerKind,
    OptimizerState,
};
use crate::ranking::{lambdarank_batch_loss, sigmoid, softplus, LogitRow};
use crate::rng::{substream, SeededRng};

/// Everything a training run reads: the frozen pipeline, the store and both
/// encoded splits (plus their raw records, for the analyses).
#[derive(Clone, Debug)]
pub struct Corpus {
    pub pipeline: FeaturePipeline,
    pub store: StaticFeatureStore,
    pub train_records: Vec<SearchRecord>,
    pub test_records: Vec<SearchRecord>,
    pub train: Dataset,
    pub test: Dataset,
}

impl Corpus {
    pub fn new(
        pipeline: FeaturePipeline,
        store: StaticFeatureStore,
        train_records: Vec<SearchRecord>,
        test_records: Vec<SearchRecord>,
    ) -> Result<Self> {
        let train = Dataset::build(&train_records, &store, &pipeline)?;
        let test = Dataset::build(&test_records, &store, &pipeline)?;
        Ok(Self {
            pipeline,
            store,
            train_records,
            test_records,
            train,
            test,
        })
    }

    /// Splits `records` by query hash, fits the pipeline on the training
    /// part and encodes both parts.
    pub fn prepare(
        listings: &[Listing],
        cities: &[String],
        schema: &RecordSchema,
        records: Vec<SearchRecord>,
        config: &PipelineConfig,
        test_fraction: f64,
    ) -> Result<Self> {
        let store = StaticFeatureStore::build_default(listings)?;
        let (train, test) = split_by_query_hash(records, test_fraction);
        let pipeline = FeaturePipeline::fit(config, schema, &store, cities, &train)?;
        Self::new(pipeline, store, train, test)
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams<f64>,
    pub curve: LearningCurve,
    pub train_ndcg: f64,
    pub test_ndcg: f64,
    pub steps: u64,
    pub pairs: u64,
    /// Long-view AUC of the view head on the test split (multi-task only).
    pub view_auc: Option<f64>,
}

/// Fresh model for `corpus`: Xavier layers, the static table filled from the
/// store, one head per objective output.
pub fn init_model(config: &TrainConfig, corpus: &Corpus) -> Result<ModelParams<f64>> {
    let mut heads = vec![BOOKING_HEAD.to_string()];
    if config.objective == Objective::Multitask {
        heads.push(VIEW_HEAD.to_string());
    }
    let arch = Architecture {
        dense_dim: corpus.pipeline.dense_dim(),
        embeddings: corpus.pipeline.embedding_specs(&corpus.store, config.listing_id_dim),
        hidden: config.hidden.clone(),
        heads,
    };
    let mut params = ModelParams::init(&arch, config.seed)?;
    params.embeddings[0] = corpus.pipeline.static_table(&corpus.store)?;
    Ok(params)
}

/// Global impression indices of a search's logit row: the booking first,
/// then the not-booked impressions in position order, truncated to
/// `num_samples - 1`. `None` when the search has no pairs.
pub fn search_columns(span: &SearchSpan, num_samples: usize) -> Option<Vec<usize>> {
    let booked = span.booked?;
    let mut cols = Vec::with_capacity(span.len.min(num_samples));
    cols.push(span.start + booked);
    cols.extend(
        (0..span.len)
            .filter(|&i| i != booked)
            .take(num_samples.saturating_sub(1))
            .map(|i| span.start + i),
    );
    (cols.len() >= 2).then_some(cols)
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    corpus: &'a Corpus,
    params: ModelParams<f64>,
    opt: OptimizerState<f64>,
    grads: Gradients<f64>,
    rng: SeededRng,
    book: usize,
    view: Option<usize>,
    tables: usize,
    acts: Vec<Activations<f64>>,
    input: Vec<f64>,
    curve: LearningCurve,
    pairs_seen: u64,
    next_checkpoint: u64,
    steps: u64,
    threads: usize,
}

impl<'a> Trainer<'a> {
    fn new(cfg: &'a TrainConfig, corpus: &'a Corpus) -> Result<Self> {
        cfg.validate()?;
        let params = init_model(cfg, corpus)?;
        let book = params.head_index(BOOKING_HEAD)?;
        let view = params.head_index(VIEW_HEAD).ok();
        Ok(Self {
            opt: OptimizerState::new(&params, cfg.adam),
            grads: Gradients::zeros_like(&params),
            rng: substream(cfg.seed, 0x7EA1),
            tables: params.embeddings.len(),
            params,
            book,
            view,
            acts: Vec::new(),
            input: Vec::new(),
            curve: LearningCurve::default(),
            pairs_seen: 0,
            next_checkpoint: cfg.checkpoint_every_pairs,
            steps: 0,
            threads: cfg.threads(),
            cfg,
            corpus,
        })
    }

    fn forward(&mut self, i: usize, slot: usize) -> Result<()> {
        if self.acts.len() <= slot {
            self.acts.resize_with(slot + 1, Activations::default);
        }
        let ds = &self.corpus.train;
        self.params
            .gather(ds.dense_row(i), &ds.slots(i, self.tables), &mut self.input)?;
        let masks = if self.cfg.dropout > 0.0 {
            Some(
                self.params
                    .hidden
                    .iter()
                    .map(|l| dropout_mask(l.shape.output_dim, self.cfg.dropout, &mut self.rng))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        self.params
            .forward_hidden(&self.input, masks.as_deref(), &mut self.acts[slot])
    }

    fn backward(&mut self, i: usize, slot: usize, dlogits: &[(usize, f64)]) -> Result<()> {
        let g_in = self.params.backward(&self.acts[slot], dlogits, &mut self.grads)?;
        let ds = &self.corpus.train;
        self.grads.scatter_input(&self.params, &ds.slots(i, self.tables), &g_in);
        Ok(())
    }

    fn apply(&mut self, loss: f64) -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite loss {loss} at step {} after {} pairs",
                self.steps + 1,
                self.pairs_seen
            )));
        }
        let result = match self.cfg.optimizer {
            OptimizerKind::Adam => adam_step(&mut self.params, &self.grads, &mut self.opt),
            OptimizerKind::LazyAdam => {
                let touched: Vec<BTreeSet<usize>> = self
                    .grads
                    .embeddings
                    .iter()
                    .map(|rows| rows.keys().copied().collect())
                    .collect();
                lazy_adam_step(&mut self.params, &self.grads, &mut self.opt, &touched)
            }
        };
        result.map_err(|e| Error::Diverged(format!("step {} rejected: {e}", self.steps + 1)))?;
        self.grads.clear();
        self.steps += 1;
        Ok(())
    }

    fn pairwise_step(&mut self, batch: &[Vec<usize>]) -> Result<()> {
        let mut rows = Vec::with_capacity(batch.len());
        let mut slot = 0;
        for cols in batch {
            let mut logits = Vec::with_capacity(cols.len());
            for &c in cols {
                self.forward(c, slot)?;
                logits.push(self.params.head_logit(self.book, &self.acts[slot]));
                slot += 1;
            }
            rows.push(LogitRow::new(logits).map_err(|e| Error::Diverged(e.to_string()))?);
        }
        let bl = lambdarank_batch_loss(&rows, self.cfg.pair_weighting)?;
        let multitask = self.cfg.objective == Objective::Multitask;
        let w_book = if multitask { self.cfg.w_book } else { 1.0 };
        let mut loss = w_book * bl.loss;
        let n_slots = slot as f64;
        let mut slot = 0;
        let mut dlogits = Vec::with_capacity(2);
        for (cols, g_row) in batch.iter().zip(&bl.grads) {
            for (&c, &g) in cols.iter().zip(g_row) {
                dlogits.clear();
                dlogits.push((self.book, w_book * g));
                if let (true, Some(view)) = (multitask, self.view) {
                    let s = self.params.head_logit(view, &self.acts[slot]);
                    let secs = self.corpus.train.long_view[c].max(0.0) as f64;
                    let y = if secs >= self.cfg.long_view_threshold_seconds {
                        1.0
                    } else {
                        0.0
                    };
                    let w = secs.ln_1p();
                    loss += self.cfg.w_view * w * (softplus(s) - y * s) / n_slots;
                    dlogits.push((view, self.cfg.w_view * w * (sigmoid(s) - y) / n_slots));
                }
                self.backward(c, slot, &dlogits)?;
                slot += 1;
            }
        }
        self.apply(loss)
    }

    fn pointwise_step(&mut self, batch: &[Vec<usize>]) -> Result<()> {
        let n: usize = batch.iter().map(Vec::len).sum();
        let mut loss = 0.0;
        let mut preds = Vec::with_capacity(n);
        for (slot, &c) in batch.iter().flatten().enumerate() {
            self.forward(c, slot)?;
            let s = self.params.head_logit(self.book, &self.acts[slot]);
            let y = if self.corpus.train.booked[c] { 1.0 } else { 0.0 };
            loss += (s - y) * (s - y);
            preds.push((c, s - y));
        }
        let scale = 1.0 / n as f64;
        for (slot, &(c, r)) in preds.iter().enumerate() {
            self.backward(c, slot, &[(self.book, 2.0 * r * scale)])?;
        }
        self.apply(loss * scale)
    }

    fn checkpoint(&mut self) -> Result<()> {
        let train = evaluate_ndcg(&self.params, &self.corpus.train, self.threads)?.mean;
        let test = evaluate_ndcg(&self.params, &self.corpus.test, self.threads)?.mean;
        if self.curve.points.last().is_some_and(|p| p.pairs >= self.pairs_seen) {
            self.curve.points.pop();
        }
        self.curve.points.push(Checkpoint {
            pairs: self.pairs_seen,
            train_ndcg: train,
            test_ndcg: test,
        });
        log::info!(
            "pairs {:>9}  train ndcg {:.4}  test ndcg {:.4}",
            self.pairs_seen,
            train,
            test
        );
        Ok(())
    }

    fn run(mut self) -> Result<TrainOutcome> {
        let ds = &self.corpus.train;
        let units: Vec<Vec<usize>> = ds
            .searches
            .iter()
            .filter_map(|s| search_columns(s, self.cfg.num_samples))
            .collect();
        if units.len() < ds.searches.len() {
            log::warn!(
                "skipping {} training searches without exactly one booking and a negative",
                ds.searches.len() - units.len()
            );
        }
        if units.is_empty() {
            return Err(Error::invalid("no training search has a booking and a negative"));
        }
        self.checkpoint()?;
        let pointwise = self.cfg.objective == Objective::PointwiseL2;
        let mut order: Vec<usize> = (0..units.len()).collect();
        let mut batch: Vec<Vec<usize>> = Vec::new();
        for _ in 0..self.cfg.epochs {
            order.shuffle(&mut self.rng);
            let mut size = 0;
            let mut batch_pairs = 0u64;
            for (k, &u) in order.iter().enumerate() {
                let cols = &units[u];
                size += if pointwise { cols.len() } else { cols.len() - 1 };
                batch_pairs += (cols.len() - 1) as u64;
                batch.push(cols.clone());
                if size >= self.cfg.batch_size || k + 1 == order.len() {
                    if pointwise {
                        self.pointwise_step(&batch)?;
                    } else {
                        self.pairwise_step(&batch)?;
                    }
                    batch.clear();
                    size = 0;
                    self.pairs_seen += batch_pairs;
                    batch_pairs = 0;
                    if self.cfg.checkpoint_every_pairs > 0 && self.pairs_seen >= self.next_checkpoint {
                        self.checkpoint()?;
                        while self.next_checkpoint <= self.pairs_seen {
                            self.next_checkpoint += self.cfg.checkpoint_every_pairs;
                        }
                    }
                }
            }
        }
        // Publish at storage precision so saved models score identically.
        self.params = self.params.cast::<f32>().cast::<f64>();
        self.checkpoint()?;
        let last = *self.curve.last().expect("at least one checkpoint");
        let view_auc = match self.view {
            Some(_) => {
                let scores = score_dataset(&self.params, &self.corpus.test, VIEW_HEAD, self.threads)?;
                Some(long_view_auc(
                    &self.corpus.test,
                    &scores,
                    self.cfg.long_view_threshold_seconds,
                ))
            }
            None => None,
        };
        Ok(TrainOutcome {
            params: self.params,
            curve: self.curve,
            train_ndcg: last.train_ndcg,
            test_ndcg: last.test_ndcg,
            steps: self.steps,
            pairs: self.pairs_seen,
            view_auc,
        })
    }
}

/// Trains the objective named in `config`.
pub fn train(config: &TrainConfig, corpus: &Corpus) -> Result<TrainOutcome> {
    Trainer::new(config, corpus)?.run()
}

fn with_objective(config: &TrainConfig, objective: Objective) -> TrainConfig {
    TrainConfig {
        objective,
        ..config.clone()
    }
}

/// Squared error against booked = 1, not booked = 0, on the booking head.
pub fn train_pointwise(config: &TrainConfig, corpus: &Corpus) -> Result<TrainOutcome> {
    train(&with_objective(config, Objective::PointwiseL2), corpus)
}

pub fn train_lambdarank(config: &TrainConfig, corpus: &Corpus) -> Result<TrainOutcome> {
    train(&with_objective(config, Objective::Lambdarank), corpus)
}

/// Booking head on the lambdarank loss (weight `w_book`), long-view head on
/// a log-dwell weighted sigmoid cross-entropy (weight `w_view`).
pub fn train_multitask(config: &TrainConfig, corpus: &Corpus) -> Result<TrainOutcome> {
    train(&with_objective(config, Objective::Multitask), corpus)
}
