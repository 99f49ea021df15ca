use std::cmp::Ordering;
use std::fmt::Write as _;
use std::net::SocketAddr;

use anyhow::{bail, Context, Result};
use rankforge::data::{read_records, split_by_query_hash, Dataset};
use rankforge::serve::{latency_benchmark, load_model, save_model, Candidate, ScoreQuery, Scorer};
use rankforge::train::{
    evaluate_ndcg, long_view_auc, random_ndcg_baseline, score_dataset, train as train_model, worker_threads, Corpus,
    Objective, VIEW_HEAD,
};
use rankforge_server::{serve_endpoint, ScorerHandle};
use serde_json::json;

use super::{finish, input_data_dir, input_file, record_data_dir, setup, write_json, write_text};
use crate::config::{resolve, EvaluateConfig, ScoreConfig, ServeConfig, TrainRunConfig};
use crate::datadir::load_data_dir;
use crate::manifest::RunManifest;
use crate::{EvaluateArgs, ScoreArgs, ServeArgs, TrainArgs};

pub const MODEL_FILE: &str = "model.abrkm";

fn threads(configured: usize) -> usize {
    if configured == 0 {
        worker_threads()
    } else {
        configured
    }
}

pub fn train(a: TrainArgs) -> Result<RunManifest> {
    let (replay, out) = setup(&a.common, "train")?;
    let mut cfg: TrainRunConfig = resolve(a.common.config.as_deref(), replay.as_ref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(o) = &a.objective {
        cfg.train.objective = serde_json::from_value::<Objective>(json!(o))
            .with_context(|| format!("unknown objective `{o}` (pointwise_l2, lambdarank, multitask)"))?;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if a.listing_id_dim.is_some() {
        cfg.train.listing_id_dim = a.listing_id_dim;
    }
    cfg.train.seed = cfg.seed;
    let dir = input_data_dir(&a.data, replay.as_ref())?;
    let mut manifest = RunManifest::new("train", Some(cfg.seed), &cfg, &out)?;
    record_data_dir(&mut manifest, &dir)?;
    let data = load_data_dir(&dir)?;
    let corpus = Corpus::prepare(
        &data.listings,
        &data.city_names(),
        &data.schema,
        data.records,
        &cfg.pipeline,
        cfg.test_fraction,
    )?;
    let outcome = train_model(&cfg.train, &corpus)?;
    save_model(
        &outcome.params,
        &data.schema,
        &corpus.pipeline,
        &corpus.store,
        out.join(MODEL_FILE),
    )?;
    write_text(&out, "learning_curve.csv", &outcome.curve.to_csv())?;
    let metrics = json!({
        "objective": cfg.train.objective,
        "train_ndcg": outcome.train_ndcg,
        "test_ndcg": outcome.test_ndcg,
        "random_ndcg": random_ndcg_baseline(&corpus.test),
        "view_auc": outcome.view_auc,
        "steps": outcome.steps,
        "pairs": outcome.pairs,
        "train_searches": corpus.train.searches.len(),
        "test_searches": corpus.test.searches.len(),
    });
    write_json(&out, "metrics.json", &metrics)?;
    manifest.add_output("model", MODEL_FILE)?;
    manifest.add_output("learning_curve", "learning_curve.csv")?;
    manifest.add_output("metrics", "metrics.json")?;
    println!(
        "trained {:?}: train NDCG {:.4}, test NDCG {:.4}",
        cfg.train.objective, outcome.train_ndcg, outcome.test_ndcg
    );
    finish(manifest, metrics)
}

pub fn evaluate(a: EvaluateArgs) -> Result<RunManifest> {
    let (replay, out) = setup(&a.common, "evaluate")?;
    let cfg: EvaluateConfig = resolve(a.common.config.as_deref(), replay.as_ref())?;
    let dir = input_data_dir(&a.data, replay.as_ref())?;
    let model_path = input_file(&a.model, replay.as_ref(), "model")?;
    let mut manifest = RunManifest::new("evaluate", None, &cfg, &out)?;
    record_data_dir(&mut manifest, &dir)?;
    manifest.add_input("model", &model_path)?;
    let model = load_model(&model_path)?;
    let data = load_data_dir(&dir)?;
    if data.schema != model.header.schema {
        bail!("data schema does not match the model's");
    }
    let (_, test) = split_by_query_hash(data.records, cfg.test_fraction);
    let ds = Dataset::build(&test, &model.store, &model.header.pipeline)?;
    let t = threads(cfg.threads);
    let report = evaluate_ndcg(&model.params, &ds, t)?;
    let view_auc = match model.params.head_index(VIEW_HEAD) {
        Ok(_) => {
            let s = score_dataset(&model.params, &ds, VIEW_HEAD, t)?;
            Some(long_view_auc(&ds, &s, cfg.long_view_threshold_seconds))
        }
        Err(_) => None,
    };
    let metrics = json!({
        "test_ndcg": report.mean,
        "random_ndcg": random_ndcg_baseline(&ds),
        "searches": report.per_search.len(),
        "skipped_searches": report.skipped,
        "view_auc": view_auc,
    });
    write_json(&out, "metrics.json", &metrics)?;
    manifest.add_output("metrics", "metrics.json")?;
    println!("test NDCG {:.4} over {} searches", report.mean, report.per_search.len());
    finish(manifest, metrics)
}

pub fn score(a: ScoreArgs) -> Result<RunManifest> {
    let (replay, out) = setup(&a.common, "score")?;
    let mut cfg: ScoreConfig = resolve(a.common.config.as_deref(), replay.as_ref())?;
    if let Some(n) = a.latency_iterations {
        cfg.latency_iterations = n;
    }
    let model_path = input_file(&a.model, replay.as_ref(), "model")?;
    let records_path = input_file(&a.records, replay.as_ref(), "records")?;
    let mut manifest = RunManifest::new("score", None, &cfg, &out)?;
    manifest.add_input("model", &model_path)?;
    manifest.add_input("records", &records_path)?;
    let scorer = Scorer::new(load_model(&model_path)?)?;
    let (schema, records) = read_records(&records_path)?;
    if &schema != scorer.schema() {
        bail!("record schema does not match the model's");
    }
    let mut csv = String::from("query_id,listing_id,position,score,rank,error\n");
    let (mut scored, mut failed) = (0usize, 0usize);
    for r in &records {
        let city = scorer.pipeline().city_name(r.city)?.to_string();
        let scores: Vec<_> = r
            .impressions
            .iter()
            .map(|imp| scorer.score_raw(&city, imp.listing_id, &imp.features))
            .collect();
        let mut order: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].is_ok()).collect();
        order.sort_by(|&x, &y| {
            let (sx, sy) = (scores[x].as_ref().unwrap(), scores[y].as_ref().unwrap());
            sy.partial_cmp(sx)
                .unwrap_or(Ordering::Equal)
                .then(r.impressions[x].listing_id.cmp(&r.impressions[y].listing_id))
        });
        let mut rank = vec![None; scores.len()];
        for (k, &i) in order.iter().enumerate() {
            rank[i] = Some(k);
        }
        for (i, (imp, s)) in r.impressions.iter().zip(&scores).enumerate() {
            match s {
                Ok(s) => {
                    scored += 1;
                    writeln!(
                        csv,
                        "{},{},{},{s},{},",
                        r.query_id,
                        imp.listing_id,
                        imp.position,
                        rank[i].unwrap()
                    )?;
                }
                Err(e) => {
                    failed += 1;
                    writeln!(csv, "{},{},{},,,\"{e}\"", r.query_id, imp.listing_id, imp.position)?;
                }
            }
        }
    }
    write_text(&out, "scores.csv", &csv)?;
    manifest.add_output("scores", "scores.csv")?;
    if cfg.latency_iterations > 0 {
        let store = scorer.store();
        let n = cfg.latency_candidates.min(store.len());
        if n == 0 {
            bail!("model store is empty");
        }
        let width = scorer.candidate_features().len();
        let candidates: Vec<Candidate> = store.ids()[..n]
            .iter()
            .map(|&id| Candidate {
                listing_id: id,
                dynamic_features: vec![1.0; width],
            })
            .collect();
        let query = ScoreQuery {
            city: scorer.pipeline().cities[0].clone(),
            map_center: store.location(0),
            stay_length: 3,
            guest_count: 2,
        };
        let lat = latency_benchmark(&scorer, &query, &candidates, cfg.latency_iterations)?;
        println!(
            "latency for {} candidates over {} runs: p50 {:.3} ms, p90 {:.3} ms",
            lat.candidates, lat.iterations, lat.p50_ms, lat.p90_ms
        );
        manifest.measurements = serde_json::to_value(lat)?;
    }
    println!(
        "scored {scored} impressions ({failed} failed) from {} searches",
        records.len()
    );
    finish(
        manifest,
        json!({ "scored": scored, "failed": failed, "searches": records.len() }),
    )
}

pub fn serve(a: ServeArgs) -> Result<RunManifest> {
    let (replay, out) = setup(&a.common, "serve")?;
    let mut cfg: ServeConfig = resolve(a.common.config.as_deref(), replay.as_ref())?;
    if let Some(h) = a.host {
        cfg.host = h;
    }
    if let Some(p) = a.port {
        cfg.port = p;
    }
    let model_path = input_file(&a.model, replay.as_ref(), "model")?;
    let mut manifest = RunManifest::new("serve", None, &cfg, &out)?;
    manifest.add_input("model", &model_path)?;
    let addr: SocketAddr = format!("{}:{}", cfg.host, cfg.port)
        .parse()
        .with_context(|| format!("bad listen address {}:{}", cfg.host, cfg.port))?;
    let handle = ScorerHandle::new(Scorer::new(load_model(&model_path)?)?);
    manifest.write()?;
    println!("serving POST http://{addr}/score (ctrl-c to stop)");
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(serve_endpoint(handle, addr))?;
    finish(manifest, json!({}))
}
