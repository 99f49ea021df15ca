use super::SearchRecord;
use crate::rng::mix64;

const SPLIT_SALT: u64 = 0x5EED_5917_0000_0001;

pub fn query_hash(query_id: u64) -> u64 {
    mix64(query_id ^ SPLIT_SALT)
}

/// Deterministic train/test split on the query-id hash. Records are ranked by
/// hash and the lowest `round(len * (1 - test_fraction))` go to train; both
/// halves keep input order.
pub fn split_by_query_hash(records: Vec<SearchRecord>, test_fraction: f64) -> (Vec<SearchRecord>, Vec<SearchRecord>) {
    let n = records.len();
    let n_train = ((n as f64) * (1.0 - test_fraction.clamp(0.0, 1.0))).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (query_hash(records[i].query_id), i));
    let mut is_train = vec![false; n];
    for &i in &order[..n_train] {
        is_train[i] = true;
    }
    let mut train = Vec::with_capacity(n_train);
    let mut test = Vec::with_capacity(n - n_train);
    for (rec, t) in records.into_iter().zip(is_train) {
        if t {
            train.push(rec);
        } else {
            test.push(rec);
        }
    }
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recs(n: u64) -> Vec<SearchRecord> {
        (0..n)
            .map(|q| SearchRecord {
                query_id: q,
                city: 0,
                impressions: vec![],
            })
            .collect()
    }

    #[test]
    fn exact_fraction_and_disjoint() {
        let (train, test) = split_by_query_hash(recs(1000), 0.2);
        assert_eq!((train.len(), test.len()), (800, 200));
        let mut ids: Vec<u64> = train.iter().chain(&test).map(|r| r.query_id).collect();
        ids.sort();
        assert_eq!(ids, (0..1000).collect::<Vec<_>>());
        assert!(train.windows(2).all(|w| w[0].query_id < w[1].query_id));
    }

    #[test]
    fn membership_does_not_depend_on_order() {
        let (a, _) = split_by_query_hash(recs(100), 0.2);
        let mut rev = recs(100);
        rev.reverse();
        let (b, _) = split_by_query_hash(rev, 0.2);
        let mut ids: Vec<u64> = b.iter().map(|r| r.query_id).collect();
        ids.sort();
        assert_eq!(a.iter().map(|r| r.query_id).collect::<Vec<_>>(), ids);
    }
}
