//! End-to-end acceptance checks. Runs as a plain binary (no libtest harness)
//! so every criterion prints exactly one PASS/FAIL line; exits non-zero when
//! any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, ExitCode};
use std::time::{Duration, Instant};

use rand::Rng;
use rankforge::analysis::{permutation_importance, topbot_report, PermutationScope};
use rankforge::data::{generate_marketplace, raw_columns, GenConfig, Marketplace, PipelineConfig, StoreMode};
use rankforge::features::{fit_feature_stats, percentile_sorted, smoothness_report, SpikeConfig};
use rankforge::nncore::{Architecture, EmbeddingSpec, Gradients, ModelParams, Slot};
use rankforge::ranking::{
    delta_ndcg_weights, lambdarank_batch_loss, ndcg_single_relevant, sigmoid, softplus, LogitRow, PairWeighting,
};
use rankforge::rng::seeded;
use rankforge::serve::{load_model, save_model, Candidate, ScoreQuery, Scorer};
use rankforge::train::{
    random_ndcg_baseline, run_id_overfit_experiment, score_dataset, train, Corpus, Objective, TrainConfig,
    TrainOutcome, BOOKING_HEAD, VIEW_HEAD,
};
use rankforge_cli::{run_args, RunManifest, MANIFEST_FILE};
use rankforge_server::{bind, ScoreReply, ScoreRequest, ScorerHandle};

// Pinned tolerances and thresholds.
// Central differences balance truncation and round-off near cbrt(eps).
const FD_STEP: f64 = 1e-5;
const FD_MAX_REL_ERR: f64 = 1e-4;
const FD_NETS: u64 = 20;
const FD_MAX_SECONDS: f64 = 10.0;
const ORACLE_ROWS: usize = 1_000;
const ORACLE_TOL: f64 = 1e-12;
const PINNED_WEIGHT_TOL: f64 = 1e-5;
const DATA_SEED: u64 = 42;
const RETRAIN_SEEDS: [u64; 3] = [7, 8, 9];
const ORDERING_MAX_SECONDS: f64 = 600.0;
const ID_DIM: usize = 8;
const MEDIAN_TOL: f64 = 0.05;
const MIN_UNIT_MASS: f64 = 0.90;
const CORRUPT_FRACTION: f64 = 0.02;
const BENCH_IMPRESSIONS: usize = 1_000_000;
const MIN_SPEEDUP: f64 = 5.0;
const PERMUTATION_SEED: u64 = 11;
const RESHUFFLES: usize = 10;
const NOISE_MAX_DELTA: f64 = 0.005;
const STRONG_MIN_DELTA: f64 = 0.02;
const TOPBOT_K: usize = 3;
const TOPBOT_BINS: usize = 20;
const PARITY_INPUTS: usize = 1_000;
const PARITY_TOL: f64 = 1e-6;
const CONCURRENT_REQUESTS: usize = 32;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Shared inputs: the default marketplace, its corpus and the default model.
struct World {
    market: Marketplace,
    corpus: Corpus,
    model: Option<TrainOutcome>,
    scratch: tempfile::TempDir,
}

impl World {
    fn new() -> Self {
        let market = generate_marketplace(&GenConfig::default(), DATA_SEED).unwrap();
        let corpus = Corpus::prepare(
            &market.listings,
            &market.city_names(),
            &market.schema,
            market.records.clone(),
            &PipelineConfig::default(),
            0.2,
        )
        .unwrap();
        Self {
            market,
            corpus,
            model: None,
            scratch: tempfile::tempdir().unwrap(),
        }
    }

    fn model(&mut self) -> &TrainOutcome {
        if self.model.is_none() {
            let cfg = TrainConfig {
                checkpoint_every_pairs: 0,
                ..TrainConfig::default()
            };
            self.model = Some(train(&cfg, &self.corpus).unwrap());
        }
        self.model.as_ref().unwrap()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn spread(v: &[f64]) -> f64 {
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

// ---------------------------------------------------------------- gradients

struct Item {
    dense: Vec<f64>,
    frozen: usize,
    emb: usize,
}

fn micro_net(seed: u64, heads: &[&str]) -> ModelParams<f64> {
    let arch = Architecture {
        dense_dim: 3,
        embeddings: vec![
            EmbeddingSpec {
                name: "frozen".into(),
                bucket_count: 4,
                dim: 2,
                trainable: false,
            },
            EmbeddingSpec {
                name: "emb".into(),
                bucket_count: 6,
                dim: 3,
                trainable: true,
            },
        ],
        hidden: vec![5, 3],
        heads: heads.iter().map(|h| h.to_string()).collect(),
    };
    let mut p = ModelParams::init(&arch, seed).unwrap();
    let mut rng = seeded(seed.wrapping_mul(31) + 1);
    p.embeddings[0]
        .values
        .iter_mut()
        .for_each(|v| *v = rng.random_range(-1.0..1.0));
    for l in p.hidden.iter_mut().chain(p.heads.iter_mut().map(|h| &mut h.layer)) {
        l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
    }
    p
}

fn micro_batch(seed: u64) -> Vec<Vec<Item>> {
    let mut rng = seeded(seed.wrapping_mul(17) + 3);
    (0..2)
        .map(|_| {
            (0..4)
                .map(|_| Item {
                    dense: (0..3).map(|_| rng.random_range(-2.0..2.0)).collect(),
                    frozen: rng.random_range(0..4),
                    emb: rng.random_range(0..6),
                })
                .collect()
        })
        .collect()
}

fn logit(p: &ModelParams<f64>, it: &Item, head: &str) -> f64 {
    let mut input = Vec::new();
    p.gather(&it.dense, &[Slot::Row(it.frozen), Slot::Row(it.emb)], &mut input)
        .unwrap();
    p.forward(&input, head).unwrap().0
}

fn view_target(k: usize) -> (bool, f64) {
    (k.is_multiple_of(3), 1.0 + (k % 4) as f64)
}

/// `w_book * lambdarank + w_view * weighted sigmoid CE on the view head`.
fn micro_loss(p: &ModelParams<f64>, batch: &[Vec<Item>], w_book: f64, w_view: f64) -> f64 {
    let rows: Vec<_> = batch
        .iter()
        .map(|s| LogitRow::new(s.iter().map(|it| logit(p, it, "booking")).collect()).unwrap())
        .collect();
    let mut total = w_book * lambdarank_batch_loss(&rows, PairWeighting::DeltaNdcg).unwrap().loss;
    if w_view > 0.0 {
        for (k, it) in batch.iter().flatten().enumerate() {
            let z = logit(p, it, "view");
            let (y, w) = view_target(k);
            total += w_view * w * if y { softplus(-z) } else { softplus(z) };
        }
    }
    total
}

fn micro_grads(p: &ModelParams<f64>, batch: &[Vec<Item>], w_book: f64, w_view: f64) -> Gradients<f64> {
    let mut g = Gradients::zeros_like(p);
    let book = p.head_index("booking").unwrap();
    let view = p.head_index("view").ok();
    let rows: Vec<_> = batch
        .iter()
        .map(|s| LogitRow::new(s.iter().map(|it| logit(p, it, "booking")).collect()).unwrap())
        .collect();
    let loss = lambdarank_batch_loss(&rows, PairWeighting::DeltaNdcg).unwrap();
    let mut k = 0;
    for (s, dl) in batch.iter().zip(&loss.grads) {
        for (it, &d) in s.iter().zip(dl) {
            let slots = [Slot::Row(it.frozen), Slot::Row(it.emb)];
            let mut input = Vec::new();
            p.gather(&it.dense, &slots, &mut input).unwrap();
            let (_, acts) = p.forward(&input, "booking").unwrap();
            let mut heads = vec![(book, w_book * d)];
            if let Some(v) = view {
                let (y, w) = view_target(k);
                let z = p.head_logit(v, &acts);
                heads.push((v, w_view * w * (sigmoid(z) - y as u8 as f64)));
            }
            let gin = p.backward(&acts, &heads, &mut g).unwrap();
            g.scatter_input(p, &slots, &gin);
            k += 1;
        }
    }
    g
}

type ParamRef = Box<dyn Fn(&mut ModelParams<f64>) -> &mut f64>;

fn max_fd_error(p: &ModelParams<f64>, batch: &[Vec<Item>], w_book: f64, w_view: f64) -> f64 {
    let g = micro_grads(p, batch, w_book, w_view);
    let mut pairs: Vec<(ParamRef, f64)> = Vec::new();
    for l in 0..p.hidden.len() {
        for i in 0..p.hidden[l].weights.len() {
            pairs.push((Box::new(move |q| &mut q.hidden[l].weights[i]), g.hidden[l].weights[i]));
        }
        for i in 0..p.hidden[l].bias.len() {
            pairs.push((Box::new(move |q| &mut q.hidden[l].bias[i]), g.hidden[l].bias[i]));
        }
    }
    for h in 0..p.heads.len() {
        for i in 0..p.heads[h].layer.weights.len() {
            pairs.push((
                Box::new(move |q| &mut q.heads[h].layer.weights[i]),
                g.heads[h].weights[i],
            ));
        }
        pairs.push((Box::new(move |q| &mut q.heads[h].layer.bias[0]), g.heads[h].bias[0]));
    }
    let dim = p.embeddings[1].dim;
    for row in 0..p.embeddings[1].bucket_count {
        for c in 0..dim {
            let a = g.embeddings[1].get(&row).map_or(0.0, |r| r[c]);
            pairs.push((Box::new(move |q| &mut q.embeddings[1].values[row * dim + c]), a));
        }
    }
    let mut worst: f64 = if g.embeddings[0].is_empty() { 0.0 } else { f64::INFINITY };
    for (get, analytic) in pairs {
        let mut q = p.clone();
        *get(&mut q) += FD_STEP;
        let up = micro_loss(&q, batch, w_book, w_view);
        *get(&mut q) -= 2.0 * FD_STEP;
        let down = micro_loss(&q, batch, w_book, w_view);
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max((analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-6));
    }
    worst
}

fn c1_gradients(_: &mut World) -> Outcome {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..FD_NETS {
        let heads: &[&str] = if seed % 2 == 0 {
            &["booking"]
        } else {
            &["booking", "view"]
        };
        let w_view = if heads.len() == 2 { 1.0 } else { 0.0 };
        worst = worst.max(max_fd_error(&micro_net(seed, heads), &micro_batch(seed), 5.0, w_view));
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst < FD_MAX_REL_ERR && secs < FD_MAX_SECONDS,
        format!("{FD_NETS} nets, max rel err {worst:.2e} (< {FD_MAX_REL_ERR:e}), {secs:.2}s (< {FD_MAX_SECONDS}s)"),
    )
}

// ------------------------------------------------------------------ metrics

fn oracle_discount(rank: usize) -> f64 {
    2f64.ln() / (rank as f64 + 2.0).ln()
}

fn c2_metric_oracles(_: &mut World) -> Outcome {
    let mut rng = seeded(515);
    let mut worst = 0.0f64;
    for _ in 0..ORACLE_ROWS {
        let n = rng.random_range(2..=32);
        let ties = rng.random_bool(0.25);
        let row: Vec<f64> = (0..n)
            .map(|_| {
                if ties {
                    rng.random_range(0..3) as f64
                } else {
                    rng.random_range(-4.0..4.0)
                }
            })
            .collect();
        let booked = rng.random_range(0..n);
        let mut desc: Vec<usize> = (0..n).collect();
        desc.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        let want = oracle_discount(desc.iter().position(|&i| i == booked).unwrap());
        worst = worst.max((ndcg_single_relevant(&row, booked).unwrap() - want).abs());

        let mut asc: Vec<usize> = (0..n).collect();
        asc.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        let rank = |c: usize| n - 1 - asc.iter().position(|&i| i == c).unwrap();
        let got = delta_ndcg_weights(&LogitRow::new(row.clone()).unwrap());
        for (c, g) in (1..n).zip(got) {
            worst = worst.max((g - (oracle_discount(rank(0)) - oracle_discount(rank(c))).abs()).abs());
        }
    }
    let pinned = delta_ndcg_weights(&LogitRow::new(vec![2.0f64, 1.0, 0.5]).unwrap());
    let pinned_ok = (pinned[0] - 0.36907).abs() < PINNED_WEIGHT_TOL && (pinned[1] - 0.5).abs() < PINNED_WEIGHT_TOL;
    outcome(
        worst <= ORACLE_TOL && pinned_ok,
        format!(
            "{ORACLE_ROWS} rows, max |diff| {worst:.1e} (<= {ORACLE_TOL:e}); [2,1,0.5] -> [{:.5}, {:.5}]",
            pinned[0], pinned[1]
        ),
    )
}

// ----------------------------------------------------------------- training

fn c3_model_ordering(w: &mut World) -> Outcome {
    let t = Instant::now();
    let split = (w.corpus.train.searches.len(), w.corpus.test.searches.len());
    let runs = |objective| -> Vec<f64> {
        RETRAIN_SEEDS
            .iter()
            .map(|&seed| {
                let cfg = TrainConfig {
                    objective,
                    seed,
                    checkpoint_every_pairs: 0,
                    ..TrainConfig::default()
                };
                train(&cfg, &w.corpus).unwrap().test_ndcg
            })
            .collect()
    };
    let lr = runs(Objective::Lambdarank);
    let pw = runs(Objective::PointwiseL2);
    let random = random_ndcg_baseline(&w.corpus.test);
    let band = spread(&lr).max(spread(&pw));
    let secs = t.elapsed().as_secs_f64();
    let pass = split == (10_000, 2_500)
        && mean(&lr) - mean(&pw) > band
        && mean(&pw) - random > band
        && secs < ORDERING_MAX_SECONDS;
    outcome(
        pass,
        format!(
            "split {}/{}; lambdarank {:.4} > pointwise {:.4} > random {:.4}, band {:.4}; {secs:.0}s (< {ORDERING_MAX_SECONDS}s)",
            split.0,
            split.1,
            mean(&lr),
            mean(&pw),
            random,
            band
        ),
    )
}

/// Mean gap increase over the retrain seeds and the retrain noise band.
fn id_overfit(corpus: &Corpus) -> (f64, f64) {
    let reports: Vec<_> = RETRAIN_SEEDS
        .iter()
        .map(|&seed| {
            let cfg = TrainConfig {
                seed,
                checkpoint_every_pairs: 0,
                ..TrainConfig::default()
            };
            run_id_overfit_experiment(&cfg, ID_DIM, corpus).unwrap()
        })
        .collect();
    let inc: Vec<f64> = reports.iter().map(|r| r.gap_increase()).collect();
    let with: Vec<f64> = reports.iter().map(|r| r.with_ids.gap).collect();
    let without: Vec<f64> = reports.iter().map(|r| r.without_ids.gap).collect();
    (mean(&inc), spread(&with).max(spread(&without)))
}

fn c4_listing_id_overfit(w: &mut World) -> Outcome {
    let (sparse, band) = id_overfit(&w.corpus);
    let m = generate_marketplace(&GenConfig::default().inflated(), DATA_SEED).unwrap();
    let inflated = Corpus::prepare(
        &m.listings,
        &m.city_names(),
        &m.schema,
        m.records,
        &PipelineConfig::default(),
        0.2,
    )
    .unwrap();
    let (dense, dense_band) = id_overfit(&inflated);
    outcome(
        sparse > band && dense < sparse,
        format!(
            "sparse gap increase {sparse:.4} > band {band:.4}; inflated {dense:.4} (band {dense_band:.4}) < sparse"
        ),
    )
}

// ----------------------------------------------------------------- features

fn c5_normalization(w: &mut World) -> Outcome {
    let c = &w.corpus;
    let (dynamic, statics) = raw_columns(&c.train_records, &w.market.schema, &c.store, StoreMode::Strict).unwrap();
    let mut failures = Vec::new();
    let (mut worst_median, mut worst_mass) = (0.0f64, 1.0f64);
    for (spec, col) in c.pipeline.all_specs().zip(dynamic.iter().chain(&statics)) {
        let mut t: Vec<f64> = col.iter().map(|&v| spec.apply(v).unwrap()).collect();
        let mass = t.iter().filter(|v| v.abs() <= 1.0).count() as f64 / t.len() as f64;
        t.sort_by(f64::total_cmp);
        let median = percentile_sorted(&t, 0.5);
        worst_median = worst_median.max(median.abs());
        worst_mass = worst_mass.min(mass);
        if median.abs() > MEDIAN_TOL || mass < MIN_UNIT_MASS {
            failures.push(spec.name.clone());
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "{} features; worst |median| {worst_median:.4} (<= {MEDIAN_TOL}), worst mass in [-1,1] {worst_mass:.3} (>= {MIN_UNIT_MASS}){}",
            c.pipeline.all_specs().count(),
            if failures.is_empty() { String::new() } else { format!("; failing {failures:?}") }
        ),
    )
}

fn spike_flags(m: &Marketplace) -> Vec<String> {
    let corpus = Corpus::prepare(
        &m.listings,
        &m.city_names(),
        &m.schema,
        m.records.clone(),
        &PipelineConfig::default(),
        0.2,
    )
    .unwrap();
    let (dynamic, statics) = raw_columns(&corpus.train_records, &m.schema, &corpus.store, StoreMode::Strict).unwrap();
    let mut flagged = Vec::new();
    for (spec, col) in corpus.pipeline.all_specs().zip(dynamic.iter().chain(&statics)) {
        let stats = fit_feature_stats(&spec.name, col).unwrap();
        let report = smoothness_report(&stats, &SpikeConfig::default()).unwrap();
        for _ in &report.spikes {
            flagged.push(spec.name.clone());
        }
    }
    flagged
}

fn c6_spikes(w: &mut World) -> Outcome {
    let clean = spike_flags(&w.market);
    let corrupt_cfg = GenConfig {
        corrupted_price_fraction: CORRUPT_FRACTION,
        ..GenConfig::default()
    };
    let corrupt = spike_flags(&generate_marketplace(&corrupt_cfg, DATA_SEED).unwrap());
    outcome(
        clean.is_empty() && !corrupt.is_empty(),
        format!(
            "clean: {} flags; {CORRUPT_FRACTION} monthly prices: {} flags {corrupt:?}",
            clean.len(),
            corrupt.len()
        ),
    )
}

// --------------------------------------------------------------------- io

fn arg(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

fn c7_ingestion(w: &mut World) -> Outcome {
    let out = w.scratch.path().join("bench");
    let m = run_args([
        "rankforge".to_string(),
        "bench-io".into(),
        "--impressions".into(),
        BENCH_IMPRESSIONS.to_string(),
        "--out".into(),
        arg(&out),
    ])
    .unwrap();
    let speedup = m.measurements["speedup"].as_f64().unwrap();
    let _ = std::fs::remove_dir_all(&out);
    outcome(
        speedup >= MIN_SPEEDUP,
        format!(
            "{BENCH_IMPRESSIONS} impressions: binary {:.3}s vs csv {:.3}s, {speedup:.1}x (>= {MIN_SPEEDUP}x)",
            m.measurements["binary_seconds"].as_f64().unwrap(),
            m.measurements["csv_seconds"].as_f64().unwrap()
        ),
    )
}

// --------------------------------------------------------------- analysis

fn c8_permutation(w: &mut World) -> Outcome {
    let params = w.model().params.clone();
    let row = |f: &str| {
        permutation_importance(
            &params,
            &w.corpus,
            f,
            PERMUTATION_SEED,
            RESHUFFLES,
            PermutationScope::Global,
            1,
        )
        .unwrap()
    };
    let noise = row("random_noise");
    let price = row("price");
    let noise_ok = noise.delta.abs() < NOISE_MAX_DELTA && noise.noise_band.0 <= 0.0 && 0.0 <= noise.noise_band.1;
    let price_ok = price.delta >= STRONG_MIN_DELTA && price.noise_band.0 > 0.0;
    outcome(
        noise_ok && price_ok,
        format!(
            "random_noise delta {:.4} band [{:.4}, {:.4}] contains 0; price delta {:.4} band [{:.4}, {:.4}] above 0",
            noise.delta, noise.noise_band.0, noise.noise_band.1, price.delta, price.noise_band.0, price.noise_band.1
        ),
    )
}

fn c9_topbot(w: &mut World) -> Outcome {
    let params = w.model().params.clone();
    let r = topbot_report(&params, &w.corpus, &["price", "legacy_flag"], TOPBOT_K, TOPBOT_BINS, 1).unwrap();
    let (price, flag) = (&r.features[0], &r.features[1]);
    outcome(
        price.top_median < price.bottom_median && flag.top == flag.bottom,
        format!(
            "price median top-{TOPBOT_K} {:.2} < bottom-{TOPBOT_K} {:.2}; legacy_flag histograms identical: {}",
            price.top_median,
            price.bottom_median,
            flag.top == flag.bottom
        ),
    )
}

// -------------------------------------------------------------- multitask

fn c10_multitask(w: &mut World) -> Outcome {
    let mut cross = 0.0f64;
    for seed in 0..FD_NETS {
        let p = micro_net(seed, &["booking", "view"]);
        let batch = micro_batch(seed);
        let book = micro_grads(&p, &batch, 1.0, 0.0);
        let view = micro_grads(&p, &batch, 0.0, 1.0);
        for g in book.heads[1].weights.iter().chain(&book.heads[1].bias) {
            cross = cross.max(g.abs());
        }
        for g in view.heads[0].weights.iter().chain(&view.heads[0].bias) {
            cross = cross.max(g.abs());
        }
    }
    let cfg = TrainConfig {
        objective: Objective::Multitask,
        checkpoint_every_pairs: 0,
        epochs: 1,
        ..TrainConfig::default()
    };
    let out = train(&cfg, &w.corpus).unwrap();
    let before = score_dataset(&out.params, &w.corpus.test, BOOKING_HEAD, 1).unwrap();
    let mut perturbed = out.params.clone();
    let v = perturbed.head_index(VIEW_HEAD).unwrap();
    let mut rng = seeded(3);
    perturbed.heads[v]
        .layer
        .weights
        .iter_mut()
        .for_each(|x| *x += rng.random_range(-1.0..1.0));
    perturbed.heads[v].layer.bias[0] -= 2.5;
    let after = score_dataset(&perturbed, &w.corpus.test, BOOKING_HEAD, 1).unwrap();
    let changed = before.iter().zip(&after).filter(|(a, b)| a != b).count();
    outcome(
        cross == 0.0 && changed == 0,
        format!(
            "max cross-head output gradient {cross:e} over {FD_NETS} nets; view head perturbed -> {changed} of {} booking scores changed",
            before.len()
        ),
    )
}

// ------------------------------------------------------------------ serve

fn c11_serve(w: &mut World) -> Outcome {
    let params = w.model().params.clone();
    let path = w.scratch.path().join("default.abrkm");
    save_model(&params, &w.market.schema, &w.corpus.pipeline, &w.corpus.store, &path).unwrap();
    let scorer = Scorer::new(load_model(&path).unwrap()).unwrap();
    let trainer = score_dataset(&params, &w.corpus.test, BOOKING_HEAD, 1).unwrap();
    let mut worst = 0.0f64;
    let mut k = 0;
    'outer: for r in &w.corpus.test_records {
        let city = &w.market.cities[r.city as usize].name;
        for imp in &r.impressions {
            if k == PARITY_INPUTS {
                break 'outer;
            }
            let s = scorer.score_raw(city, imp.listing_id, &imp.features).unwrap();
            worst = worst.max((s - trainer[k]).abs());
            k += 1;
        }
    }

    let record = &w.corpus.test_records[0];
    let q = &w.market.queries[record.query_id as usize];
    let keep: Vec<usize> = w
        .market
        .schema
        .feature_names
        .iter()
        .enumerate()
        .filter(|(_, n)| scorer.candidate_features().contains(&n.as_str()))
        .map(|(i, _)| i)
        .collect();
    let request = ScoreRequest {
        query: ScoreQuery {
            city: q.city.clone(),
            map_center: q.map_center,
            stay_length: q.stay_length,
            guest_count: q.guest_count,
        },
        candidates: record
            .impressions
            .iter()
            .map(|i| Candidate {
                listing_id: i.listing_id,
                dynamic_features: keep.iter().map(|&j| i.features[j]).collect(),
            })
            .collect(),
    };
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .unwrap();
    let replies: Vec<ScoreReply> = rt.block_on(async {
        let (addr, server) = bind(ScorerHandle::new(scorer), "127.0.0.1:0".parse().unwrap())
            .await
            .unwrap();
        tokio::spawn(server);
        let client = reqwest::Client::new();
        let url = format!("http://{addr}/score");
        futures::future::join_all((0..CONCURRENT_REQUESTS).map(|_| {
            let (client, url, request) = (client.clone(), url.clone(), request.clone());
            async move {
                client
                    .post(&url)
                    .json(&request)
                    .send()
                    .await
                    .unwrap()
                    .json::<ScoreReply>()
                    .await
                    .unwrap()
            }
        }))
        .await
    });
    let identical = replies.len() == CONCURRENT_REQUESTS && replies.iter().all(|r| *r == replies[0]);
    let start = w.corpus.test.searches[0].start;
    let endpoint_parity = replies[0]
        .scores
        .iter()
        .enumerate()
        .map(|(i, s)| (s - trainer[start + i]).abs())
        .fold(0.0, f64::max);
    outcome(
        k == PARITY_INPUTS && worst <= PARITY_TOL && identical && endpoint_parity <= PARITY_TOL,
        format!(
            "{k} inputs, max |loaded - trainer| {worst:.1e} (<= {PARITY_TOL:e}); {CONCURRENT_REQUESTS} concurrent requests identical: {identical}, endpoint vs trainer {endpoint_parity:.1e}"
        ),
    )
}

// ------------------------------------------------------------ determinism

fn run_cli(args: &[String]) -> RunManifest {
    let mut full = vec!["rankforge".to_string()];
    full.extend_from_slice(args);
    run_args(full).unwrap_or_else(|e| panic!("{args:?}: {e:#}"))
}

fn s(v: &str) -> String {
    v.to_string()
}

/// Starts `serve` as a child process and waits for its manifest.
fn spawn_serve(args: &[String], out: &Path) -> Child {
    let child = Command::new(env!("CARGO_BIN_EXE_rankforge"))
        .args(args)
        .stdout(std::process::Stdio::null())
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(60);
    while !out.join(MANIFEST_FILE).exists() && Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(50));
    }
    std::thread::sleep(Duration::from_millis(100));
    child
}

fn c12_determinism(w: &mut World) -> Outcome {
    let root = w.scratch.path().join("replay");
    let d = |name: &str| arg(&root.join(name));
    let data = d("generate.1");
    let model = format!("{}/model.abrkm", d("train.1"));
    let records = format!("{data}/records.abrk");
    let commands: Vec<(&str, Vec<String>)> = vec![
        (
            "generate",
            vec![
                s("--seed"),
                s("3"),
                s("--searches"),
                s("600"),
                s("--listings"),
                s("400"),
                s("--csv"),
            ],
        ),
        ("analyze-features", vec![s("--data"), data.clone()]),
        (
            "train",
            vec![
                s("--data"),
                data.clone(),
                s("--epochs"),
                s("1"),
                s("--objective"),
                s("multitask"),
            ],
        ),
        ("evaluate", vec![s("--data"), data.clone(), s("--model"), model.clone()]),
        (
            "importance",
            vec![
                s("--data"),
                data.clone(),
                s("--model"),
                model.clone(),
                s("--features"),
                s("price,random_noise"),
                s("--repetitions"),
                s("3"),
                s("--ablation"),
            ],
        ),
        (
            "topbot",
            vec![
                s("--data"),
                data.clone(),
                s("--model"),
                model.clone(),
                s("--features"),
                s("price,legacy_flag"),
            ],
        ),
        (
            "score",
            vec![
                s("--model"),
                model.clone(),
                s("--records"),
                records,
                s("--latency-iterations"),
                s("3"),
            ],
        ),
        ("bench-io", vec![s("--impressions"), s("20000"), s("--repeats"), s("1")]),
    ];
    let mut mismatched = Vec::new();
    let mut files = 0;
    for (sub, args) in &commands {
        let first_dir = d(&format!("{sub}.1"));
        let mut a = vec![s(sub)];
        a.extend(args.iter().cloned());
        a.extend([s("--out"), first_dir.clone()]);
        let first = run_cli(&a);
        let manifest = arg(&PathBuf::from(&first_dir).join(MANIFEST_FILE));
        let second = run_cli(&[s(sub), s("--manifest"), manifest, s("--out"), d(&format!("{sub}.2"))]);
        files += first.outputs.len();
        if first.outputs.is_empty() || first.outputs != second.outputs || first.metrics != second.metrics {
            mismatched.push(sub.to_string());
        }
    }

    let serve_dir = |i: usize| root.join(format!("serve.{i}"));
    let mut child = spawn_serve(
        &[
            s("serve"),
            s("--model"),
            model,
            s("--port"),
            s("0"),
            s("--out"),
            arg(&serve_dir(1)),
        ],
        &serve_dir(1),
    );
    let first = RunManifest::read(&serve_dir(1).join(MANIFEST_FILE));
    let _ = child.kill();
    let _ = child.wait();
    let mut child = spawn_serve(
        &[
            s("serve"),
            s("--manifest"),
            arg(&serve_dir(1).join(MANIFEST_FILE)),
            s("--out"),
            arg(&serve_dir(2)),
        ],
        &serve_dir(2),
    );
    let second = RunManifest::read(&serve_dir(2).join(MANIFEST_FILE));
    let _ = child.kill();
    let _ = child.wait();
    match (first, second) {
        (Ok(a), Ok(b)) if a.inputs == b.inputs && a.outputs == b.outputs && a.config == b.config => {}
        _ => mismatched.push("serve".into()),
    }

    outcome(
        mismatched.is_empty(),
        format!(
            "{} subcommands replayed from their manifests, {files} hashed outputs{}",
            commands.len() + 1,
            if mismatched.is_empty() {
                String::from(" identical")
            } else {
                format!("; mismatched {mismatched:?}")
            }
        ),
    )
}

type Criterion = fn(&mut World) -> Outcome;

fn main() -> ExitCode {
    // Runs under `cargo test`; listing requests from the harness get nothing.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let criteria: [(&str, Criterion); 12] = [
        ("gradient correctness", c1_gradients),
        ("metric oracle equivalence", c2_metric_oracles),
        ("model ordering", c3_model_ordering),
        ("listing-id overfitting", c4_listing_id_overfit),
        ("normalization contract", c5_normalization),
        ("spike detection", c6_spikes),
        ("ingestion speedup", c7_ingestion),
        ("permutation sanity", c8_permutation),
        ("topbot", c9_topbot),
        ("multi-task heads", c10_multitask),
        ("serve parity", c11_serve),
        ("determinism", c12_determinism),
    ];
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut world = World::new();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check(&mut world)));
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        failed += !pass as usize;
        println!(
            "criterion {n:>2} {} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} failed", failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
