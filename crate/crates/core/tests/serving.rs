use rankforge::data::{generate_marketplace, GenConfig, Marketplace, PipelineConfig};
use rankforge::serve::{
    decode_model, encode_model, latency_benchmark, load_model, save_model, Candidate, ScoreQuery, Scorer,
};
use rankforge::train::{
    ndcg_from_scores, score_dataset, train, Corpus, Objective, TrainConfig, TrainOutcome, BOOKING_HEAD,
};

const PARITY_TOL: f64 = 1e-6;

struct Fixture {
    m: Marketplace,
    corpus: Corpus,
    out: TrainOutcome,
}

fn fixture(objective: Objective, listing_id_dim: Option<usize>) -> Fixture {
    let m = generate_marketplace(
        &GenConfig {
            searches: 800,
            listings: 500,
            ..GenConfig::default()
        },
        17,
    )
    .unwrap();
    let corpus = Corpus::prepare(
        &m.listings,
        &m.city_names(),
        &m.schema,
        m.records.clone(),
        &PipelineConfig::default(),
        0.2,
    )
    .unwrap();
    let cfg = TrainConfig {
        objective,
        listing_id_dim,
        hidden: vec![24, 12],
        epochs: 1,
        checkpoint_every_pairs: 0,
        eval_threads: 1,
        ..TrainConfig::default()
    };
    let out = train(&cfg, &corpus).unwrap();
    Fixture { m, corpus, out }
}

fn scorer_for(f: &Fixture) -> Scorer {
    let bytes = encode_model(&f.out.params, &f.m.schema, &f.corpus.pipeline, &f.corpus.store).unwrap();
    Scorer::new(decode_model(&bytes).unwrap()).unwrap()
}

#[test]
fn loaded_model_matches_trainer_forward_pass() {
    for (objective, ids) in [(Objective::Lambdarank, None), (Objective::Multitask, Some(4))] {
        let f = fixture(objective, ids);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.abrkm");
        save_model(&f.out.params, &f.m.schema, &f.corpus.pipeline, &f.corpus.store, &path).unwrap();
        let scorer = Scorer::new(load_model(&path).unwrap()).unwrap();
        let ds = &f.corpus.test;
        let trainer_scores = score_dataset(&f.out.params, ds, BOOKING_HEAD, 1).unwrap();
        let mut served = Vec::with_capacity(ds.len());
        let mut k = 0;
        for r in &f.corpus.test_records {
            let city = &f.m.cities[r.city as usize].name;
            for imp in &r.impressions {
                let s = scorer.score_raw(city, imp.listing_id, &imp.features).unwrap();
                served.push(s);
                k += 1;
            }
        }
        assert!(k >= 1000, "only {k} test impressions");
        let worst = served[..1000]
            .iter()
            .zip(&trainer_scores)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= PARITY_TOL, "{objective:?}: max diff {worst:e}");
        let ndcg = ndcg_from_scores(ds, &served).unwrap().mean;
        assert!((ndcg - f.out.test_ndcg).abs() < 1e-12);
    }
}

#[test]
fn batch_scoring_derives_geo_offsets_from_map_center() {
    let f = fixture(Objective::Lambdarank, None);
    let scorer = scorer_for(&f);
    let names = scorer.candidate_features();
    let keep: Vec<usize> =
        f.m.schema
            .feature_names
            .iter()
            .enumerate()
            .filter(|(_, n)| names.contains(&n.as_str()))
            .map(|(i, _)| i)
            .collect();
    for r in f.corpus.test_records.iter().take(50) {
        let q = &f.m.queries[r.query_id as usize];
        assert_eq!(q.id, r.query_id);
        let query = ScoreQuery {
            city: q.city.clone(),
            map_center: q.map_center,
            stay_length: 3,
            guest_count: 2,
        };
        let cands: Vec<Candidate> = r
            .impressions
            .iter()
            .map(|imp| Candidate {
                listing_id: imp.listing_id,
                dynamic_features: keep.iter().map(|&i| imp.features[i]).collect(),
            })
            .collect();
        let resp = scorer.score_batch(&query, &cands).unwrap();
        assert!(resp.errors.is_empty());
        for (imp, s) in r.impressions.iter().zip(&resp.scores) {
            let want = scorer.score_raw(&q.city, imp.listing_id, &imp.features).unwrap();
            assert_eq!(s.unwrap(), want);
        }
        let mut sorted = resp.scores.iter().map(|s| s.unwrap()).collect::<Vec<_>>();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let by_order: Vec<f64> = resp
            .order
            .iter()
            .map(|id| resp.scores[cands.iter().position(|c| c.listing_id == *id).unwrap()].unwrap())
            .collect();
        assert_eq!(by_order, sorted);
    }
}

#[test]
fn batch_edge_cases() {
    let f = fixture(Objective::Lambdarank, None);
    let scorer = scorer_for(&f);
    let width = scorer.candidate_features().len();
    let query = ScoreQuery {
        city: f.m.cities[0].name.clone(),
        map_center: f.m.cities[0].center,
        stay_length: 2,
        guest_count: 1,
    };
    let cand = |id: u64| Candidate {
        listing_id: id,
        dynamic_features: vec![0.5; width],
    };

    let one = scorer.score_batch(&query, &[cand(3)]).unwrap();
    assert_eq!(one.order, vec![3]);
    assert!(one.scores[0].is_some());

    let dup = scorer.score_batch(&query, &[cand(3), cand(3)]).unwrap();
    assert_eq!(dup.scores[0], dup.scores[1]);
    assert_eq!(dup.order, vec![3, 3]);

    let unknown = scorer.score_batch(&query, &[cand(3), cand(9_999_999)]).unwrap();
    assert_eq!(unknown.scores[1], None);
    assert_eq!(unknown.errors.len(), 1);
    assert_eq!((unknown.errors[0].index, unknown.errors[0].listing_id), (1, 9_999_999));
    assert_eq!(unknown.order, vec![3]);

    let narrow = scorer
        .score_batch(
            &query,
            &[Candidate {
                listing_id: 3,
                dynamic_features: vec![0.5],
            }],
        )
        .unwrap();
    assert_eq!(narrow.errors.len(), 1);

    assert!(scorer
        .score_batch(
            &ScoreQuery {
                city: "Atlantis".into(),
                ..query.clone()
            },
            &[cand(3)]
        )
        .is_err());
    assert!(scorer.score_batch(&query, &[]).unwrap().order.is_empty());

    let lat = latency_benchmark(&scorer, &query, &vec![cand(3); 200], 5).unwrap();
    assert!(lat.p50_ms <= lat.p90_ms && lat.p90_ms <= lat.max_ms);
}

#[test]
fn damaged_files_are_rejected() {
    let f = fixture(Objective::Lambdarank, None);
    let bytes = encode_model(&f.out.params, &f.m.schema, &f.corpus.pipeline, &f.corpus.store).unwrap();
    assert!(decode_model(&bytes).is_ok());
    for at in [0, 5, bytes.len() / 2, bytes.len() - 20, bytes.len() - 1] {
        let mut bad = bytes.clone();
        bad[at] ^= 0x40;
        assert!(decode_model(&bad).is_err(), "flip at {at} accepted");
    }
    assert!(decode_model(&bytes[..bytes.len() - 9]).is_err());
    assert!(decode_model(&[]).is_err());
    assert!(load_model("").is_err());
    assert!(save_model(&f.out.params, &f.m.schema, &f.corpus.pipeline, &f.corpus.store, "").is_err());
    let dir = tempfile::tempdir().unwrap();
    assert!(load_model(dir.path().join("missing.abrkm")).is_err());
}
