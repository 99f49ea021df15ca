use std::time::Instant;

use anyhow::{bail, Result};
use rankforge::data::{
    generate_marketplace, raw_columns, read_csv_records, read_records, split_by_query_hash, write_csv_records,
    write_records, FeaturePipeline, SearchRecord, StaticFeatureStore,
};
use rankforge::features::{bimodality_coefficient, choose_transform, fit_feature_stats, smoothness_report};
use serde::Serialize;
use serde_json::json;

use super::{finish, input_data_dir, record_data_dir, setup, write_json, write_text};
use crate::config::{resolve, AnalyzeConfig, BenchIoConfig, GenerateConfig};
use crate::datadir::{load_data_dir, write_data_dir};
use crate::manifest::RunManifest;
use crate::{AnalyzeArgs, BenchIoArgs, GenerateArgs};

pub fn generate(a: GenerateArgs) -> Result<RunManifest> {
    let (replay, out) = setup(&a.common, "generate")?;
    let mut cfg: GenerateConfig = resolve(a.common.config.as_deref(), replay.as_ref())?;
    if a.inflated {
        cfg.generator = cfg.generator.inflated();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.searches {
        cfg.generator.searches = n;
    }
    if let Some(n) = a.listings {
        cfg.generator.listings = n;
    }
    if let Some(f) = a.corrupt_fraction {
        cfg.generator.corrupted_price_fraction = f;
    }
    cfg.csv |= a.csv;
    let mut manifest = RunManifest::new("generate", Some(cfg.seed), &cfg, &out)?;
    let m = generate_marketplace(&cfg.generator, cfg.seed)?;
    for f in write_data_dir(&out, &m, cfg.csv)? {
        manifest.add_output("data", f)?;
    }
    let impressions: usize = m.records.iter().map(|r| r.impressions.len()).sum();
    let count = |p: fn(&rankforge::data::Impression) -> bool| -> usize {
        m.records.iter().flat_map(|r| &r.impressions).filter(|i| p(i)).count()
    };
    let bookings = count(|i| i.booked);
    let metrics = json!({
        "searches": m.records.len(),
        "impressions": impressions,
        "listings": m.listings.len(),
        "bookings": bookings,
        "clicks": count(|i| i.clicked),
        "long_views": count(|i| i.long_view_seconds > 0.0),
    });
    println!(
        "generated {} searches, {impressions} impressions, {bookings} bookings into {}",
        m.records.len(),
        out.display()
    );
    finish(manifest, metrics)
}

#[derive(Serialize)]
struct FeatureSummary {
    feature: String,
    source: &'static str,
    count: usize,
    mean: f64,
    std: f64,
    median: f64,
    skewness: f64,
    min: f64,
    max: f64,
    degenerate: bool,
    recommendation: rankforge::features::Recommendation,
    transform: rankforge::features::Transform,
    spikes: Vec<rankforge::features::Spike>,
    verdict: &'static str,
    transformed_median: f64,
    transformed_within_unit: f64,
    bimodality_raw: Option<f64>,
    bimodality_transformed: Option<f64>,
}

pub fn analyze_features(a: AnalyzeArgs) -> Result<RunManifest> {
    let (replay, out) = setup(&a.common, "analyze-features")?;
    let cfg: AnalyzeConfig = resolve(a.common.config.as_deref(), replay.as_ref())?;
    let dir = input_data_dir(&a.data, replay.as_ref())?;
    let mut manifest = RunManifest::new("analyze-features", None, &cfg, &out)?;
    record_data_dir(&mut manifest, &dir)?;
    let data = load_data_dir(&dir)?;
    let store = StaticFeatureStore::build_default(&data.listings)?;
    let cities = data.city_names();
    let (train, _) = split_by_query_hash(data.records, cfg.test_fraction);
    let pipeline = FeaturePipeline::fit(&cfg.pipeline, &data.schema, &store, &cities, &train)?;
    let (dynamic, statics) = raw_columns(&train, &data.schema, &store, cfg.pipeline.store_mode)?;
    let columns = pipeline
        .dynamic
        .iter()
        .zip(&dynamic)
        .map(|c| ("dynamic", c))
        .chain(pipeline.statics.iter().zip(&statics).map(|c| ("static", c)));
    let mut rows = Vec::new();
    let mut spiky = Vec::new();
    let mut violations = Vec::new();
    for (source, (spec, raw)) in columns {
        let stats = fit_feature_stats(&spec.name, raw)?;
        let smooth = smoothness_report(&stats, &cfg.spike)?;
        let transformed = raw
            .iter()
            .map(|&v| spec.apply(v))
            .collect::<rankforge::Result<Vec<f64>>>()?;
        let tstats = fit_feature_stats(&spec.name, &transformed)?;
        let within = transformed.iter().filter(|v| v.abs() <= 1.0).count() as f64 / transformed.len().max(1) as f64;
        if !smooth.is_smooth() {
            spiky.push(spec.name.clone());
        }
        if tstats.median.abs() > 0.05 || within < 0.9 {
            violations.push(spec.name.clone());
        }
        write_text(&out, &format!("hist/{}.raw.csv", spec.name), &stats.histogram.to_csv())?;
        write_text(
            &out,
            &format!("hist/{}.transformed.csv", spec.name),
            &tstats.histogram.to_csv(),
        )?;
        rows.push(FeatureSummary {
            feature: spec.name.clone(),
            source,
            count: stats.count,
            mean: stats.mean,
            std: stats.std,
            median: stats.median,
            skewness: stats.skewness,
            min: stats.min,
            max: stats.max,
            degenerate: stats.degenerate,
            recommendation: choose_transform(&stats),
            transform: spec.transform.clone(),
            verdict: smooth.verdict(),
            spikes: smooth.spikes,
            transformed_median: tstats.median,
            transformed_within_unit: within,
            bimodality_raw: bimodality_coefficient(raw).ok(),
            bimodality_transformed: bimodality_coefficient(&transformed).ok(),
        });
    }
    write_json(&out, "features.json", &rows)?;
    manifest.add_output("report", "features.json")?;
    for r in &rows {
        manifest.add_output("histogram", format!("hist/{}.raw.csv", r.feature))?;
        manifest.add_output("histogram", format!("hist/{}.transformed.csv", r.feature))?;
    }
    for r in &rows {
        println!(
            "{:<22} {:<8} {:<15} median' {:+.3} in[-1,1] {:.3} {}",
            r.feature,
            r.source,
            r.transform.label(),
            r.transformed_median,
            r.transformed_within_unit,
            r.verdict
        );
    }
    finish(
        manifest,
        json!({ "features": rows.len(), "spiky": spiky, "contract_violations": violations }),
    )
}

pub fn bench_io(a: BenchIoArgs) -> Result<RunManifest> {
    let (replay, out) = setup(&a.common, "bench-io")?;
    let mut cfg: BenchIoConfig = resolve(a.common.config.as_deref(), replay.as_ref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.impressions {
        cfg.impressions = n;
    }
    if let Some(n) = a.repeats {
        cfg.repeats = n;
    }
    if cfg.impressions == 0 || cfg.repeats == 0 {
        bail!("impressions and repeats must be >= 1");
    }
    let mut manifest = RunManifest::new("bench-io", Some(cfg.seed), &cfg, &out)?;
    let mut gen = rankforge::data::GenConfig::default();
    let mean = (gen.min_impressions + gen.max_impressions) as f64 / 2.0;
    gen.searches = (cfg.impressions as f64 / mean * 1.1).ceil() as usize + 10;
    let m = generate_marketplace(&gen, cfg.seed)?;
    let mut total = 0usize;
    let records: Vec<_> = m
        .records
        .into_iter()
        .take_while(|r| {
            let more = total < cfg.impressions;
            total += r.impressions.len();
            more
        })
        .collect();
    let impressions: usize = records.iter().map(|r| r.impressions.len()).sum();
    if impressions < cfg.impressions {
        bail!("generator produced only {impressions} impressions");
    }
    let bin_path = out.join("bench.abrk");
    let csv_path = out.join("bench.csv");
    write_records(&records, &m.schema, &bin_path)?;
    write_csv_records(&records, &m.schema, &csv_path)?;
    manifest.add_output("records", "bench.abrk")?;
    manifest.add_output("records", "bench.csv")?;
    drop(records);

    // Only the read is timed; freeing the decoded records happens after.
    let best = |read: &dyn Fn() -> Result<Vec<SearchRecord>>| -> Result<f64> {
        let mut best = f64::INFINITY;
        for _ in 0..cfg.repeats {
            let t = Instant::now();
            let records = read()?;
            best = best.min(t.elapsed().as_secs_f64());
            let n: usize = records.iter().map(|r| r.impressions.len()).sum();
            if n != impressions {
                bail!("reader returned {n} impressions, expected {impressions}");
            }
        }
        Ok(best)
    };
    let bin_secs = best(&|| Ok(read_records(&bin_path)?.1))?;
    let csv_secs = best(&|| Ok(read_csv_records(&csv_path, &m.schema)?))?;
    let bin_bytes = std::fs::metadata(&bin_path)?.len();
    let csv_bytes = std::fs::metadata(&csv_path)?.len();
    let speedup = csv_secs / bin_secs;
    manifest.measurements = json!({
        "binary_seconds": bin_secs,
        "csv_seconds": csv_secs,
        "binary_impressions_per_second": impressions as f64 / bin_secs,
        "csv_impressions_per_second": impressions as f64 / csv_secs,
        "speedup": speedup,
    });
    println!(
        "{impressions} impressions: binary {:.3}s ({:.1} MB), csv {:.3}s ({:.1} MB), binary is {speedup:.1}x faster",
        bin_secs,
        bin_bytes as f64 / 1e6,
        csv_secs,
        csv_bytes as f64 / 1e6
    );
    finish(
        manifest,
        json!({ "impressions": impressions, "searches": gen.searches, "binary_bytes": bin_bytes, "csv_bytes": csv_bytes }),
    )
}
