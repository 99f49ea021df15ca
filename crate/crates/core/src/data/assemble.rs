//! Joins records with the static store and turns raw values into model
//! inputs through frozen feature transforms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::store::static_feature_value;
use super::{Impression, Listing, RecordSchema, SearchRecord, StaticFeatureStore, StoreMode};
use crate::error::{Error, Result};
use crate::features::{
    fit_feature_stats, grid_cell, hash_cross, FeatureKind, FeatureSpec, TransformChoice, DEFAULT_CELL_LEVEL,
};
use crate::nncore::{EmbeddingSpec, EmbeddingTable, Slot};

pub const STATIC_TABLE: &str = "static";
pub const CROSS_TABLE: &str = "city_cell";
pub const LISTING_TABLE: &str = "listing_id";

/// Dynamic features that hold degree offsets from the query map center.
pub const GEO_FEATURES: [&str; 2] = ["lat_offset", "lng_offset"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Per-feature transform choices; features not listed use `auto`.
    pub transforms: BTreeMap<String, TransformChoice>,
    pub cross_buckets: u64,
    pub cross_dim: usize,
    pub cell_level: u8,
    pub store_mode: StoreMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut transforms = BTreeMap::new();
        for name in [
            "price",
            "bedrooms",
            "amenity_count",
            "review_count",
            "historical_bookings",
            "occupancy_per_stay",
            "avg_length_of_stay",
            "similarity",
            "random_noise",
        ] {
            transforms.insert(name.to_string(), TransformChoice::Powerlaw);
        }
        for name in GEO_FEATURES {
            transforms.insert(name.to_string(), TransformChoice::GeoLogOffset);
        }
        Self {
            transforms,
            cross_buckets: 1 << 16,
            cross_dim: 8,
            cell_level: DEFAULT_CELL_LEVEL,
            store_mode: StoreMode::Strict,
        }
    }
}

/// Fitted, frozen transforms plus what is needed to build the categorical
/// cross.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    /// One spec per dynamic feature, in record schema order.
    pub dynamic: Vec<FeatureSpec>,
    /// One spec per static store feature, in store order.
    pub statics: Vec<FeatureSpec>,
    pub cities: Vec<String>,
    pub cross_buckets: u64,
    pub cross_dim: usize,
    pub cell_level: u8,
    pub store_mode: StoreMode,
}

fn kind_of(name: &str) -> FeatureKind {
    if GEO_FEATURES.contains(&name) {
        FeatureKind::Geo
    } else {
        FeatureKind::Numeric
    }
}

/// Per-feature value columns.
pub type Columns = Vec<Vec<f64>>;

/// Raw per-impression values of every dynamic and static feature over
/// `records`, skipping impressions of unknown listings in lenient mode.
pub fn raw_columns(
    records: &[SearchRecord],
    schema: &RecordSchema,
    store: &StaticFeatureStore,
    mode: StoreMode,
) -> Result<(Columns, Columns)> {
    let mut dynamic = vec![Vec::new(); schema.len()];
    let mut statics = vec![Vec::new(); store.dim()];
    for r in records {
        for imp in &r.impressions {
            let row = match (store.row_of(imp.listing_id), mode) {
                (Some(row), _) => row,
                (None, StoreMode::Lenient) => continue,
                (None, StoreMode::Strict) => return Err(Error::UnknownListing(imp.listing_id)),
            };
            if imp.features.len() != schema.len() {
                return Err(Error::Schema(format!(
                    "query {}: impression has {} features, schema has {}",
                    r.query_id,
                    imp.features.len(),
                    schema.len()
                )));
            }
            for (col, &v) in dynamic.iter_mut().zip(&imp.features) {
                col.push(v as f64);
            }
            for (col, &v) in statics.iter_mut().zip(store.row(row)) {
                col.push(v as f64);
            }
        }
    }
    Ok((dynamic, statics))
}

impl FeaturePipeline {
    /// Fits every transform on the training records only.
    pub fn fit(
        config: &PipelineConfig,
        schema: &RecordSchema,
        store: &StaticFeatureStore,
        cities: &[String],
        train: &[SearchRecord],
    ) -> Result<Self> {
        if !config.cross_buckets.is_power_of_two() || config.cross_buckets < 2 || config.cross_dim == 0 {
            return Err(Error::Config(format!(
                "cross_buckets must be a power of two >= 2 and cross_dim >= 1 (got {}, {})",
                config.cross_buckets, config.cross_dim
            )));
        }
        for name in config.transforms.keys() {
            if schema.index_of(name).is_none() && !store.names().contains(name) {
                log::debug!("transform configured for absent feature `{name}`");
            }
        }
        let (dyn_cols, static_cols) = raw_columns(train, schema, store, config.store_mode)?;
        let fit = |name: &str, col: &[f64]| -> Result<FeatureSpec> {
            let stats = fit_feature_stats(name, col)?;
            let choice = config.transforms.get(name).copied().unwrap_or_default();
            FeatureSpec::fit(name, kind_of(name), choice, stats)
        };
        let dynamic = schema
            .feature_names
            .iter()
            .zip(&dyn_cols)
            .map(|(n, c)| fit(n, c))
            .collect::<Result<Vec<_>>>()?;
        let statics = store
            .names()
            .iter()
            .zip(&static_cols)
            .map(|(n, c)| fit(n, c))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dynamic,
            statics,
            cities: cities.to_vec(),
            cross_buckets: config.cross_buckets,
            cross_dim: config.cross_dim,
            cell_level: config.cell_level,
            store_mode: config.store_mode,
        })
    }

    pub fn dense_dim(&self) -> usize {
        self.dynamic.len()
    }

    pub fn static_dim(&self) -> usize {
        self.statics.len()
    }

    pub fn spec(&self, name: &str) -> Option<&FeatureSpec> {
        self.dynamic.iter().chain(&self.statics).find(|s| s.name == name)
    }

    pub fn spec_mut(&mut self, name: &str) -> Option<&mut FeatureSpec> {
        self.dynamic
            .iter_mut()
            .chain(&mut self.statics)
            .find(|s| s.name == name)
    }

    pub fn all_specs(&self) -> impl Iterator<Item = &FeatureSpec> {
        self.dynamic.iter().chain(&self.statics)
    }

    pub fn city_name(&self, token: u32) -> Result<&str> {
        self.cities
            .get(token as usize)
            .map(String::as_str)
            .ok_or_else(|| Error::Schema(format!("unknown city token {token}")))
    }

    pub fn city_token(&self, name: &str) -> Option<u32> {
        self.cities.iter().position(|c| c == name).map(|i| i as u32)
    }

    /// Transformed dynamic features, appended to `out`.
    pub fn dense_into(&self, raw: &[f32], out: &mut Vec<f64>) -> Result<()> {
        if raw.len() != self.dynamic.len() {
            return Err(Error::Schema(format!(
                "{} dynamic values, pipeline expects {}",
                raw.len(),
                self.dynamic.len()
            )));
        }
        for (spec, &v) in self.dynamic.iter().zip(raw) {
            out.push(spec.apply(v as f64)?);
        }
        Ok(())
    }

    /// Transformed static features, appended to `out`. Values are rounded to
    /// 32-bit precision, the precision the model file stores them at.
    pub fn statics_into(&self, raw: &[f32], out: &mut Vec<f64>) -> Result<()> {
        if raw.len() != self.statics.len() {
            return Err(Error::Schema(format!(
                "{} static values, pipeline expects {}",
                raw.len(),
                self.statics.len()
            )));
        }
        for (spec, &v) in self.statics.iter().zip(raw) {
            out.push(spec.apply(v as f64)? as f32 as f64);
        }
        Ok(())
    }

    /// The non-trainable embedding holding every listing's transformed static
    /// features, one row per store row.
    pub fn static_table(&self, store: &StaticFeatureStore) -> Result<EmbeddingTable<f64>> {
        let mut values = Vec::with_capacity(store.len() * self.static_dim());
        for row in 0..store.len() {
            self.statics_into(store.row(row), &mut values)?;
        }
        Ok(EmbeddingTable {
            name: STATIC_TABLE.to_string(),
            bucket_count: store.len(),
            dim: self.static_dim(),
            trainable: false,
            values,
        })
    }

    pub fn cross_bucket(&self, city: &str, lat: f64, lng: f64) -> Result<usize> {
        let cell = grid_cell(lat, lng, self.cell_level)?;
        Ok(hash_cross(city, cell, self.cross_buckets)? as usize)
    }

    /// Embedding tables the model is built with, in slot order.
    pub fn embedding_specs(&self, store: &StaticFeatureStore, listing_dim: Option<usize>) -> Vec<EmbeddingSpec> {
        let mut specs = vec![
            EmbeddingSpec {
                name: STATIC_TABLE.into(),
                bucket_count: store.len(),
                dim: self.static_dim(),
                trainable: false,
            },
            EmbeddingSpec {
                name: CROSS_TABLE.into(),
                bucket_count: self.cross_buckets as usize,
                dim: self.cross_dim,
                trainable: true,
            },
        ];
        if let Some(dim) = listing_dim {
            specs.push(EmbeddingSpec {
                name: LISTING_TABLE.into(),
                bucket_count: store.len(),
                dim,
                trainable: true,
            });
        }
        specs
    }
}

/// One impression ready for the network: transformed dense features plus
/// categorical indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub dense: Vec<f64>,
    /// Row of the listing in the static store (and listing-id table).
    pub listing_row: usize,
    pub cross_bucket: usize,
}

/// Store-joined assembly of one impression.
pub fn assemble_example(
    impression: &Impression,
    city_token: u32,
    store: &StaticFeatureStore,
    pipeline: &FeaturePipeline,
) -> Result<Example> {
    let listing_row = store.lookup(impression.listing_id)?;
    let mut dense = Vec::with_capacity(pipeline.dense_dim());
    pipeline.dense_into(&impression.features, &mut dense)?;
    let (lat, lng) = store.location(listing_row);
    let cross_bucket = pipeline.cross_bucket(pipeline.city_name(city_token)?, lat, lng)?;
    Ok(Example {
        dense,
        listing_row,
        cross_bucket,
    })
}

/// Full model input (dense, static, cross) built without the store: static
/// features are transformed from the listing itself.
pub fn assemble_inline(
    impression: &Impression,
    city_token: u32,
    listing: &Listing,
    pipeline: &FeaturePipeline,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let mut dense = Vec::with_capacity(pipeline.dense_dim());
    pipeline.dense_into(&impression.features, &mut dense)?;
    let raw = pipeline
        .statics
        .iter()
        .map(|s| static_feature_value(listing, &s.name).map(|v| v as f32))
        .collect::<Result<Vec<_>>>()?;
    let mut statics = Vec::with_capacity(raw.len());
    pipeline.statics_into(&raw, &mut statics)?;
    let cross = pipeline.cross_bucket(pipeline.city_name(city_token)?, listing.lat, listing.lng)?;
    Ok((dense, statics, cross))
}

/// One search inside a [`Dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpan {
    pub query_id: u64,
    pub start: usize,
    pub len: usize,
    /// Offset of the booked impression within the span, when exactly one.
    pub booked: Option<usize>,
}

impl SearchSpan {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Replacement raw values for one feature, one per impression in dataset
/// order. Used by the analyses to perturb a feature before transforms.
#[derive(Clone, Debug, PartialEq)]
pub struct RawOverride {
    pub feature: String,
    pub values: Vec<f64>,
}

/// Column-major-by-impression encoding of a record set.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dense_dim: usize,
    pub static_dim: usize,
    /// `len * dense_dim` transformed dynamic features.
    pub dense: Vec<f64>,
    /// `len * dense_dim` raw dynamic features, as logged.
    pub raw: Vec<f32>,
    /// Per-impression transformed static features when built inline;
    /// `None` means the model looks rows up in its static table.
    pub statics: Option<Vec<f64>>,
    pub rows: Vec<usize>,
    pub cross: Vec<usize>,
    pub listing_ids: Vec<u64>,
    pub booked: Vec<bool>,
    pub long_view: Vec<f32>,
    pub searches: Vec<SearchSpan>,
    /// Impressions dropped for unknown listings (lenient mode).
    pub skipped: usize,
}

impl Dataset {
    /// Store-joined encoding.
    pub fn build(records: &[SearchRecord], store: &StaticFeatureStore, pipeline: &FeaturePipeline) -> Result<Self> {
        Self::build_with(records, store, pipeline, false, None)
    }

    /// Encoding with per-impression static values, optionally replacing one
    /// feature's raw values first.
    pub fn build_inline(
        records: &[SearchRecord],
        store: &StaticFeatureStore,
        pipeline: &FeaturePipeline,
        raw_override: Option<&RawOverride>,
    ) -> Result<Self> {
        Self::build_with(records, store, pipeline, true, raw_override)
    }

    fn build_with(
        records: &[SearchRecord],
        store: &StaticFeatureStore,
        pipeline: &FeaturePipeline,
        inline: bool,
        raw_override: Option<&RawOverride>,
    ) -> Result<Self> {
        let (dyn_slot, static_slot) = match raw_override {
            None => (None, None),
            Some(o) => {
                let d = pipeline.dynamic.iter().position(|s| s.name == o.feature);
                let s = pipeline.statics.iter().position(|s| s.name == o.feature);
                if d.is_none() && s.is_none() {
                    return Err(Error::UnknownFeature(o.feature.clone()));
                }
                if s.is_some() && !inline {
                    return Err(Error::invalid("static overrides need inline assembly"));
                }
                (d, s)
            }
        };
        if store.names()
            != pipeline
                .statics
                .iter()
                .map(|s| s.name.clone())
                .collect::<Vec<_>>()
                .as_slice()
        {
            return Err(Error::Schema("static store features differ from the pipeline's".into()));
        }
        let total: usize = records.iter().map(|r| r.impressions.len()).sum();
        let mut ds = Dataset {
            dense_dim: pipeline.dense_dim(),
            static_dim: pipeline.static_dim(),
            dense: Vec::with_capacity(total * pipeline.dense_dim()),
            raw: Vec::with_capacity(total * pipeline.dense_dim()),
            statics: inline.then(|| Vec::with_capacity(total * pipeline.static_dim())),
            rows: Vec::with_capacity(total),
            cross: Vec::with_capacity(total),
            listing_ids: Vec::with_capacity(total),
            booked: Vec::with_capacity(total),
            long_view: Vec::with_capacity(total),
            searches: Vec::with_capacity(records.len()),
            skipped: 0,
        };
        let mut raw_dyn: Vec<f32> = Vec::with_capacity(pipeline.dense_dim());
        let mut raw_static: Vec<f32> = Vec::with_capacity(pipeline.static_dim());
        let mut k = 0usize;
        for r in records {
            let city = pipeline.city_name(r.city)?;
            let start = ds.rows.len();
            for imp in &r.impressions {
                let row = match (store.row_of(imp.listing_id), pipeline.store_mode) {
                    (Some(row), _) => row,
                    (None, StoreMode::Lenient) => {
                        ds.skipped += 1;
                        continue;
                    }
                    (None, StoreMode::Strict) => return Err(Error::UnknownListing(imp.listing_id)),
                };
                raw_dyn.clear();
                raw_dyn.extend_from_slice(&imp.features);
                if let (Some(j), Some(o)) = (dyn_slot, raw_override) {
                    raw_dyn[j] = *o
                        .values
                        .get(k)
                        .ok_or_else(|| Error::invalid("override shorter than the dataset"))?
                        as f32;
                }
                pipeline.dense_into(&raw_dyn, &mut ds.dense)?;
                ds.raw.extend_from_slice(&raw_dyn);
                if let Some(st) = ds.statics.as_mut() {
                    raw_static.clear();
                    raw_static.extend_from_slice(store.row(row));
                    if let (Some(j), Some(o)) = (static_slot, raw_override) {
                        raw_static[j] = *o
                            .values
                            .get(k)
                            .ok_or_else(|| Error::invalid("override shorter than the dataset"))?
                            as f32;
                    }
                    pipeline.statics_into(&raw_static, st)?;
                }
                let (lat, lng) = store.location(row);
                ds.cross.push(pipeline.cross_bucket(city, lat, lng)?);
                ds.rows.push(row);
                ds.listing_ids.push(imp.listing_id);
                ds.booked.push(imp.booked);
                ds.long_view.push(imp.long_view_seconds);
                k += 1;
            }
            let len = ds.rows.len() - start;
            let mut booked = (start..start + len).filter(|&i| ds.booked[i]);
            let booked = match (booked.next(), booked.next()) {
                (Some(b), None) => Some(b - start),
                _ => None,
            };
            ds.searches.push(SearchSpan {
                query_id: r.query_id,
                start,
                len,
                booked,
            });
        }
        if let Some(o) = raw_override {
            if o.values.len() != k {
                return Err(Error::invalid(format!(
                    "override has {} values for {k} impressions",
                    o.values.len()
                )));
            }
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dense_row(&self, i: usize) -> &[f64] {
        &self.dense[i * self.dense_dim..(i + 1) * self.dense_dim]
    }

    /// Embedding slots of impression `i` for a model with `tables` tables
    /// (static, cross, and optionally listing id).
    pub fn slots(&self, i: usize, tables: usize) -> Vec<Slot<'_, f64>> {
        let mut s = Vec::with_capacity(tables);
        s.push(match &self.statics {
            Some(v) => Slot::Inline(&v[i * self.static_dim..(i + 1) * self.static_dim]),
            None => Slot::Row(self.rows[i]),
        });
        s.push(Slot::Row(self.cross[i]));
        if tables > 2 {
            s.push(Slot::Row(self.rows[i]));
        }
        s
    }

    /// Raw values of `feature` per impression, in dataset order. Static
    /// features come from the store row of each impression.
    pub fn raw_feature(
        &self,
        store: &StaticFeatureStore,
        pipeline: &FeaturePipeline,
        feature: &str,
    ) -> Result<Vec<f64>> {
        if let Some(j) = pipeline.dynamic.iter().position(|s| s.name == feature) {
            return Ok(self.raw.chunks_exact(self.dense_dim).map(|r| r[j] as f64).collect());
        }
        let j = store.feature_index(feature)?;
        Ok(self.rows.iter().map(|&row| store.row(row)[j] as f64).collect())
    }
}
