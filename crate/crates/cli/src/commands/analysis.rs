use anyhow::{bail, Result};
use rankforge::analysis::{
    ablation_run, permutation_importance, topbot_report, ImportanceReport, PermutationScope, CORRELATION_WARNING,
};
use rankforge::data::split_by_query_hash;
use rankforge::serve::{load_model, ModelFile};
use rankforge::train::{worker_threads, Corpus};
use serde_json::json;

use super::{finish, input_data_dir, input_file, record_data_dir, setup, write_json, write_text};
use crate::config::{resolve, ImportanceConfig, TopbotConfig};
use crate::datadir::load_data_dir;
use crate::manifest::RunManifest;
use crate::{ImportanceArgs, TopbotArgs};

fn corpus_for(model: &ModelFile, dir: &std::path::Path, test_fraction: f64) -> Result<Corpus> {
    let data = load_data_dir(dir)?;
    if data.schema != model.header.schema {
        bail!("data schema does not match the model's");
    }
    let (train, test) = split_by_query_hash(data.records, test_fraction);
    Ok(Corpus::new(
        model.header.pipeline.clone(),
        model.store.clone(),
        train,
        test,
    )?)
}

fn all_features(model: &ModelFile) -> Vec<String> {
    model.header.pipeline.all_specs().map(|s| s.name.clone()).collect()
}

pub fn importance(a: ImportanceArgs) -> Result<RunManifest> {
    let (replay, out) = setup(&a.common, "importance")?;
    let mut cfg: ImportanceConfig = resolve(a.common.config.as_deref(), replay.as_ref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(f) = a.features {
        cfg.features = f;
    }
    if let Some(r) = a.repetitions {
        cfg.repetitions = r;
    }
    if a.within_query {
        cfg.scope = PermutationScope::WithinQuery;
    }
    cfg.ablation |= a.ablation;
    let dir = input_data_dir(&a.data, replay.as_ref())?;
    let model_path = input_file(&a.model, replay.as_ref(), "model")?;
    let mut manifest = RunManifest::new("importance", Some(cfg.seed), &cfg, &out)?;
    record_data_dir(&mut manifest, &dir)?;
    manifest.add_input("model", &model_path)?;
    let model = load_model(&model_path)?;
    let corpus = corpus_for(&model, &dir, cfg.test_fraction)?;
    let features = if cfg.features.is_empty() {
        all_features(&model)
    } else {
        cfg.features.clone()
    };
    let threads = if cfg.threads == 0 {
        worker_threads()
    } else {
        cfg.threads
    };
    eprintln!("{CORRELATION_WARNING}");
    let mut report = ImportanceReport {
        rows: Vec::new(),
        warning: CORRELATION_WARNING.to_string(),
    };
    for f in &features {
        let row = permutation_importance(&model.params, &corpus, f, cfg.seed, cfg.repetitions, cfg.scope, threads)?;
        println!(
            "{:<22} delta {:+.4}  band [{:+.4}, {:+.4}]",
            row.feature, row.delta, row.noise_band.0, row.noise_band.1
        );
        report.rows.push(row);
    }
    write_json(&out, "importance.json", &report)?;
    write_text(&out, "importance.csv", &report.to_csv())?;
    manifest.add_output("report", "importance.json")?;
    manifest.add_output("report", "importance.csv")?;
    let mut ablations = Vec::new();
    if cfg.ablation {
        for f in &features {
            let r = ablation_run(&cfg.train, &corpus, f, cfg.references)?;
            println!(
                "{:<22} ablation delta {:+.4}  noise band {:.4}{}",
                r.feature,
                r.delta,
                r.noise_band,
                if r.exceeds_noise() { "" } else { "  (within noise)" }
            );
            ablations.push(r);
        }
        write_json(&out, "ablation.json", &ablations)?;
        manifest.add_output("report", "ablation.json")?;
    }
    let metrics = json!({
        "deltas": report.rows.iter().map(|r| (r.feature.clone(), r.delta)).collect::<std::collections::BTreeMap<_, _>>(),
        "ablation_deltas": ablations.iter().map(|r| (r.feature.clone(), r.delta)).collect::<std::collections::BTreeMap<_, _>>(),
    });
    finish(manifest, metrics)
}

pub fn topbot(a: TopbotArgs) -> Result<RunManifest> {
    let (replay, out) = setup(&a.common, "topbot")?;
    let mut cfg: TopbotConfig = resolve(a.common.config.as_deref(), replay.as_ref())?;
    if let Some(f) = a.features {
        cfg.features = f;
    }
    if let Some(k) = a.k {
        cfg.k = k;
    }
    if let Some(b) = a.bins {
        cfg.bins = b;
    }
    let dir = input_data_dir(&a.data, replay.as_ref())?;
    let model_path = input_file(&a.model, replay.as_ref(), "model")?;
    let mut manifest = RunManifest::new("topbot", None, &cfg, &out)?;
    record_data_dir(&mut manifest, &dir)?;
    manifest.add_input("model", &model_path)?;
    let model = load_model(&model_path)?;
    let corpus = corpus_for(&model, &dir, cfg.test_fraction)?;
    let features = if cfg.features.is_empty() {
        all_features(&model)
    } else {
        cfg.features.clone()
    };
    let names: Vec<&str> = features.iter().map(String::as_str).collect();
    let threads = if cfg.threads == 0 {
        worker_threads()
    } else {
        cfg.threads
    };
    let report = topbot_report(&model.params, &corpus, &names, cfg.k, cfg.bins, threads)?;
    write_json(&out, "topbot.json", &report)?;
    manifest.add_output("report", "topbot.json")?;
    for f in &report.features {
        let name = format!("topbot/{}.csv", f.feature);
        write_text(&out, &name, &f.to_csv())?;
        manifest.add_output("histogram", &name)?;
        println!(
            "{:<22} top median {:>10.3}  bottom median {:>10.3}  KS {:.3} (p {:.2e})",
            f.feature, f.top_median, f.bottom_median, f.ks.statistic, f.ks.p_value
        );
    }
    let metrics = json!({
        "queries_scored": report.queries_scored,
        "queries_skipped": report.queries_skipped,
        "medians": report.features.iter().map(|f| (f.feature.clone(), (f.top_median, f.bottom_median))).collect::<std::collections::BTreeMap<_, _>>(),
    });
    finish(manifest, metrics)
}
