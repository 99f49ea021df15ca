use rankforge::analysis::{ablation_run, permutation_importance, topbot_report, PermutationScope};
use rankforge::data::{generate_marketplace, GenConfig, PipelineConfig};
use rankforge::features::TransformChoice;
use rankforge::train::{train, Corpus, TrainConfig, TrainOutcome};

fn setup(pipeline: PipelineConfig) -> (Corpus, TrainOutcome, TrainConfig) {
    let m = generate_marketplace(
        &GenConfig {
            searches: 800,
            listings: 500,
            ..GenConfig::default()
        },
        23,
    )
    .unwrap();
    let corpus = Corpus::prepare(&m.listings, &m.city_names(), &m.schema, m.records, &pipeline, 0.2).unwrap();
    let cfg = TrainConfig {
        hidden: vec![24, 12],
        epochs: 1,
        checkpoint_every_pairs: 0,
        eval_threads: 1,
        ..TrainConfig::default()
    };
    let out = train(&cfg, &corpus).unwrap();
    (corpus, out, cfg)
}

#[test]
fn permuting_a_constant_feature_changes_nothing() {
    // Keep the constant flag as a live input rather than a dropped one.
    let mut pipeline = PipelineConfig::default();
    pipeline.transforms.insert("legacy_flag".into(), TransformChoice::None);
    let (corpus, out, _) = setup(pipeline);
    for scope in [PermutationScope::Global, PermutationScope::WithinQuery] {
        let row = permutation_importance(&out.params, &corpus, "legacy_flag", 5, 4, scope, 1).unwrap();
        assert_eq!(row.delta, 0.0);
        assert_eq!(row.noise_band, (0.0, 0.0));
        assert_eq!(row.baseline_ndcg, out.test_ndcg);
    }
}

#[test]
fn permutation_is_seeded_and_validated() {
    let (corpus, out, _) = setup(PipelineConfig::default());
    let a = permutation_importance(&out.params, &corpus, "price", 3, 3, PermutationScope::Global, 1).unwrap();
    let b = permutation_importance(&out.params, &corpus, "price", 3, 3, PermutationScope::Global, 2).unwrap();
    assert_eq!(a, b);
    assert!(a.noise_band.0 <= a.delta && a.delta <= a.noise_band.1);
    assert_eq!(a.baseline_ndcg, out.test_ndcg);
    assert!(permutation_importance(&out.params, &corpus, "price", 3, 0, PermutationScope::Global, 1).is_err());
    assert!(permutation_importance(&out.params, &corpus, "colour", 3, 2, PermutationScope::Global, 1).is_err());
}

#[test]
fn topbot_histograms_share_edges_and_skip_short_searches() {
    let (corpus, out, _) = setup(PipelineConfig::default());
    let report = topbot_report(&out.params, &corpus, &["price", "legacy_flag"], 3, 10, 1).unwrap();
    assert_eq!(
        report.queries_scored + report.queries_skipped,
        corpus.test.searches.len()
    );
    let short = corpus.test.searches.iter().filter(|s| s.len < 6).count();
    assert_eq!(report.queries_skipped, short);
    for f in &report.features {
        assert_eq!(f.top.edges, f.bottom.edges);
        assert_eq!(f.top.total(), (3 * report.queries_scored) as u64);
        assert_eq!(f.bottom.total(), (3 * report.queries_scored) as u64);
    }
    let flag = &report.features[1];
    assert_eq!(flag.top, flag.bottom);
    assert_eq!(flag.ks.statistic, 0.0);
}

#[test]
fn ablation_compares_against_reference_retrains() {
    let (corpus, _, cfg) = setup(PipelineConfig::default());
    let r = ablation_run(&cfg, &corpus, "random_noise", 3).unwrap();
    assert_eq!(r.reference_ndcg.len(), 3);
    assert_eq!(r.delta, r.reference_ndcg[0] - r.ablated_ndcg);
    let hi = r.reference_ndcg.iter().copied().fold(f64::MIN, f64::max);
    let lo = r.reference_ndcg.iter().copied().fold(f64::MAX, f64::min);
    assert_eq!(r.noise_band, hi - lo);
    assert!(ablation_run(&cfg, &corpus, "random_noise", 2).is_err());
    assert!(ablation_run(&cfg, &corpus, "colour", 3).is_err());
}
