use std::cmp::Ordering;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::model_file::ModelFile;
use crate::data::{
    FeaturePipeline, RecordSchema, StaticFeatureStore, CROSS_TABLE, GEO_FEATURES, LISTING_TABLE, STATIC_TABLE,
};
use crate::error::{Error, Result};
use crate::features::geo_offsets;
use crate::nncore::{Activations, ModelParams, Slot};
use crate::train::BOOKING_HEAD;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreQuery {
    pub city: String,
    /// `(lat, lng)` of the map center the search was issued from.
    pub map_center: (f64, f64),
    #[serde(default)]
    pub stay_length: u32,
    #[serde(default)]
    pub guest_count: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub listing_id: u64,
    /// Raw values of the non-geo dynamic features, in schema order. Geo
    /// offsets are derived from the map center and the listing location.
    pub dynamic_features: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateError {
    pub index: usize,
    pub listing_id: u64,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    /// One entry per candidate; `None` where the candidate failed.
    pub scores: Vec<Option<f64>>,
    /// Listing ids of scored candidates, best first.
    pub order: Vec<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<CandidateError>,
}

/// Immutable scoring snapshot. Share it behind an `Arc`; every method takes
/// `&self`.
#[derive(Clone, Debug)]
pub struct Scorer {
    params: ModelParams<f64>,
    schema: RecordSchema,
    pipeline: FeaturePipeline,
    store: StaticFeatureStore,
    head: usize,
    geo_slots: Option<(usize, usize)>,
    static_table: Option<usize>,
    cross_table: usize,
    listing_table: Option<usize>,
}

impl Scorer {
    pub fn new(file: ModelFile) -> Result<Self> {
        let ModelFile { header, params, store } = file;
        let head = params.head_index(BOOKING_HEAD)?;
        let idx = |name: &str| header.schema.index_of(name);
        let geo_slots = match (idx(GEO_FEATURES[0]), idx(GEO_FEATURES[1])) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => return Err(Error::Schema("schema has only one of the geo offsets".into())),
        };
        let cross_table = params
            .table_index(CROSS_TABLE)
            .ok_or_else(|| Error::Schema("model has no city x cell table".into()))?;
        let static_table = params.table_index(STATIC_TABLE);
        let listing_table = params.table_index(LISTING_TABLE);
        let known = [Some(cross_table), static_table, listing_table]
            .iter()
            .flatten()
            .count();
        if known != params.embeddings.len() {
            return Err(Error::Schema(
                "model has embedding tables the scorer does not know".into(),
            ));
        }
        Ok(Self {
            params,
            schema: header.schema,
            pipeline: header.pipeline,
            store,
            head,
            geo_slots,
            static_table,
            cross_table,
            listing_table,
        })
    }

    pub fn params(&self) -> &ModelParams<f64> {
        &self.params
    }

    pub fn schema(&self) -> &RecordSchema {
        &self.schema
    }

    pub fn pipeline(&self) -> &FeaturePipeline {
        &self.pipeline
    }

    pub fn store(&self) -> &StaticFeatureStore {
        &self.store
    }

    /// Names of the features a [`Candidate`] carries, in order.
    pub fn candidate_features(&self) -> Vec<&str> {
        self.schema
            .feature_names
            .iter()
            .map(String::as_str)
            .filter(|n| self.geo_slots.is_none() || !GEO_FEATURES.contains(n))
            .collect()
    }

    /// Booking-head logit for one impression given its full raw dynamic
    /// feature vector (as logged in records).
    pub fn score_raw(&self, city: &str, listing_id: u64, raw: &[f32]) -> Result<f64> {
        let mut input = Vec::with_capacity(self.params.input_dim());
        let mut acts = Activations::default();
        self.score_into(city, listing_id, raw, &mut input, &mut acts)
    }

    fn score_into(
        &self,
        city: &str,
        listing_id: u64,
        raw: &[f32],
        input: &mut Vec<f64>,
        acts: &mut Activations<f64>,
    ) -> Result<f64> {
        let row = self.store.lookup(listing_id)?;
        let mut dense = Vec::with_capacity(self.pipeline.dense_dim());
        self.pipeline.dense_into(raw, &mut dense)?;
        let (lat, lng) = self.store.location(row);
        let bucket = self.pipeline.cross_bucket(city, lat, lng)?;
        let mut slots = vec![Slot::Row(0); self.params.embeddings.len()];
        slots[self.cross_table] = Slot::Row(bucket);
        for t in [self.static_table, self.listing_table].into_iter().flatten() {
            slots[t] = Slot::Row(row);
        }
        self.params.gather(&dense, &slots, input)?;
        self.params.forward_hidden(input, None, acts)?;
        Ok(self.params.head_logit(self.head, acts))
    }

    /// Scores candidates for one query. Failing candidates get an error entry
    /// and are left out of the order; the rest are still scored.
    pub fn score_batch(&self, query: &ScoreQuery, candidates: &[Candidate]) -> Result<ScoreResponse> {
        if self.pipeline.city_token(&query.city).is_none() {
            return Err(Error::invalid(format!("unknown city `{}`", query.city)));
        }
        let (clat, clng) = query.map_center;
        if !clat.is_finite() || !clng.is_finite() {
            return Err(Error::invalid("map_center must be finite"));
        }
        let width = self.schema.len() - if self.geo_slots.is_some() { 2 } else { 0 };
        let mut resp = ScoreResponse {
            scores: Vec::with_capacity(candidates.len()),
            ..Default::default()
        };
        let mut input = Vec::with_capacity(self.params.input_dim());
        let mut acts = Activations::default();
        let mut raw = vec![0f32; self.schema.len()];
        for (index, c) in candidates.iter().enumerate() {
            let result = if c.dynamic_features.len() != width {
                Err(Error::Schema(format!(
                    "candidate has {} dynamic features, model expects {width}",
                    c.dynamic_features.len()
                )))
            } else {
                self.fill_raw(c, query.map_center, &mut raw)
                    .and_then(|_| self.score_into(&query.city, c.listing_id, &raw, &mut input, &mut acts))
            };
            match result {
                Ok(s) => resp.scores.push(Some(s)),
                Err(e) => {
                    resp.scores.push(None);
                    resp.errors.push(CandidateError {
                        index,
                        listing_id: c.listing_id,
                        message: e.to_string(),
                    });
                }
            }
        }
        let mut ranked: Vec<(f64, u64)> = resp
            .scores
            .iter()
            .zip(candidates)
            .filter_map(|(s, c)| s.map(|s| (s, c.listing_id)))
            .collect();
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
        resp.order = ranked.into_iter().map(|(_, id)| id).collect();
        Ok(resp)
    }

    fn fill_raw(&self, c: &Candidate, center: (f64, f64), raw: &mut [f32]) -> Result<()> {
        let mut it = c.dynamic_features.iter();
        match self.geo_slots {
            None => raw.copy_from_slice(&c.dynamic_features),
            Some((a, b)) => {
                let row = self.store.lookup(c.listing_id)?;
                let (lat, lng) = self.store.location(row);
                let (dlat, dlng) = geo_offsets(lat, lng, center.0, center.1);
                for (i, slot) in raw.iter_mut().enumerate() {
                    *slot = if i == a {
                        dlat as f32
                    } else if i == b {
                        dlng as f32
                    } else {
                        *it.next().expect("width checked")
                    };
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub candidates: usize,
    pub iterations: usize,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub max_ms: f64,
}

/// Times `iterations` calls of [`Scorer::score_batch`]. Hardware dependent:
/// report it, do not assert on it.
pub fn latency_benchmark(
    scorer: &Scorer,
    query: &ScoreQuery,
    candidates: &[Candidate],
    iterations: usize,
) -> Result<LatencyReport> {
    if iterations == 0 {
        return Err(Error::invalid("iterations must be >= 1"));
    }
    let mut times = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let t = Instant::now();
        std::hint::black_box(scorer.score_batch(query, candidates)?);
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    let q = |p: f64| times[((times.len() - 1) as f64 * p).round() as usize];
    Ok(LatencyReport {
        candidates: candidates.len(),
        iterations,
        p50_ms: q(0.5),
        p90_ms: q(0.9),
        max_ms: *times.last().unwrap(),
    })
}
