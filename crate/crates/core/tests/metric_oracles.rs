use rand::Rng;
use rankforge::ranking::{delta_ndcg_weights, expected_random_ndcg, ndcg_single_relevant, LogitRow};
use rankforge::rng::seeded;

const TOL: f64 = 1e-12;

fn discount(rank: usize) -> f64 {
    2f64.ln() / (rank as f64 + 2.0).ln()
}

/// Full descending sort, ties broken by original index.
fn oracle_ndcg(scores: &[f64], booked: usize) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    discount(idx.iter().position(|&i| i == booked).unwrap())
}

/// Stable ascending sort; the last column of a tie block gets the best rank.
fn oracle_weights(row: &[f64]) -> Vec<f64> {
    let n = row.len();
    let mut asc: Vec<usize> = (0..n).collect();
    asc.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    let rank = |c: usize| n - 1 - asc.iter().position(|&i| i == c).unwrap();
    (1..n).map(|c| (discount(rank(0)) - discount(rank(c))).abs()).collect()
}

fn random_row(rng: &mut impl Rng) -> Vec<f64> {
    let n = rng.random_range(2..=40);
    let coarse = rng.random_bool(0.3);
    (0..n)
        .map(|_| {
            if coarse {
                // Small value set so ties occur often.
                rng.random_range(0..4) as f64 * 0.5
            } else {
                rng.random_range(-5.0..5.0)
            }
        })
        .collect()
}

#[test]
fn ndcg_matches_sort_oracle() {
    let mut rng = seeded(2024);
    for _ in 0..1000 {
        let row = random_row(&mut rng);
        let booked = rng.random_range(0..row.len());
        let got = ndcg_single_relevant(&row, booked).unwrap();
        assert!(
            (got - oracle_ndcg(&row, booked)).abs() <= TOL,
            "{row:?} booked {booked}"
        );
    }
}

#[test]
fn delta_weights_match_sort_oracle() {
    let mut rng = seeded(99);
    for _ in 0..1000 {
        let row = random_row(&mut rng);
        let got = delta_ndcg_weights(&LogitRow::new(row.clone()).unwrap());
        let want = oracle_weights(&row);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= TOL, "{row:?}");
        }
    }
}

#[test]
fn pinned_weight_row() {
    let w = delta_ndcg_weights(&LogitRow::new(vec![2.0f64, 1.0, 0.5]).unwrap());
    assert!((w[0] - 0.36907).abs() < 1e-5);
    assert!((w[1] - 0.5).abs() < 1e-12);
}

#[test]
fn random_baseline_matches_mean_discount() {
    let mean: f64 = (0..8).map(discount).sum::<f64>() / 8.0;
    assert!((expected_random_ndcg(8) - mean).abs() < TOL);
    assert!((expected_random_ndcg(8) - 0.494183).abs() < 1e-6);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(ndcg_single_relevant::<f64>(&[], 0).is_err());
    assert!(ndcg_single_relevant(&[1.0, 2.0], 2).is_err());
    assert!(ndcg_single_relevant(&[1.0, f64::NAN], 0).is_err());
}
