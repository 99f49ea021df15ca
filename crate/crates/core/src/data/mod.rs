//! Search-log domain model, the synthetic marketplace generator, record codecs
//! and the static feature store.

mod assemble;
mod codec;
mod csv_codec;
mod generator;
mod split;
mod store;

pub use assemble::{
    assemble_example, assemble_inline, raw_columns, Columns, Dataset, Example, FeaturePipeline, PipelineConfig,
    RawOverride, SearchSpan, CROSS_TABLE, GEO_FEATURES, LISTING_TABLE, STATIC_TABLE,
};
pub use codec::{
    encoded_len, read_records, read_records_from, write_records, write_records_to, RecordSchema, FORMAT_VERSION, MAGIC,
};
pub use csv_codec::{read_csv_records, write_csv_records};
pub use generator::{generate_marketplace, GenConfig, Marketplace, CORRUPTION_PRICE_FACTOR};
pub use split::{query_hash, split_by_query_hash};
pub use store::{static_feature_value, StaticFeatureStore, StoreMode};

use serde::{Deserialize, Serialize};

/// Static (quasi-static, per listing) model features held by the store.
pub const STATIC_FEATURES: [&str; 7] = [
    "price",
    "bedrooms",
    "amenity_count",
    "review_count",
    "historical_bookings",
    "occupancy_per_stay",
    "avg_length_of_stay",
];

/// Per-impression (query dependent) features logged with every record.
pub const DYNAMIC_FEATURES: [&str; 5] = ["lat_offset", "lng_offset", "similarity", "random_noise", "legacy_flag"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct City {
    pub name: String,
    pub center: (f64, f64),
    /// Multiplier on nightly prices in this city.
    pub price_level: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Listing {
    pub id: u64,
    pub city: u32,
    pub lat: f64,
    pub lng: f64,
    pub nightly_price: f64,
    pub bedrooms: u32,
    pub amenity_count: u32,
    pub review_count: u32,
    pub historical_bookings: u32,
    pub occupancy: f64,
    pub avg_length_of_stay: f64,
    pub min_stay: u32,
    /// Generator-only latent quality; never exported as a feature.
    #[serde(skip)]
    pub quality: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: u64,
    pub city: String,
    pub map_center: (f64, f64),
    pub guest_count: u32,
    pub stay_length: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Impression {
    pub listing_id: u64,
    pub position: u16,
    pub clicked: bool,
    pub long_view_seconds: f32,
    pub booked: bool,
    /// Dynamic features in [`RecordSchema`] order, raw (untransformed).
    pub features: Vec<f32>,
}

/// One logged search as stored in training files: the query id, its city
/// token (index into the marketplace city table) and the ordered impressions.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchRecord {
    pub query_id: u64,
    pub city: u32,
    pub impressions: Vec<Impression>,
}

impl SearchRecord {
    pub fn booked_count(&self) -> usize {
        self.impressions.iter().filter(|i| i.booked).count()
    }

    pub fn booked_index(&self) -> Option<usize> {
        let mut it = self.impressions.iter().enumerate().filter(|(_, i)| i.booked);
        match (it.next(), it.next()) {
            (Some((idx, _)), None) => Some(idx),
            _ => None,
        }
    }

    /// Positions are contiguous from 0, at most one booking, and label
    /// implications hold (booked or long view imply clicked).
    pub fn is_consistent(&self) -> bool {
        self.impressions.iter().enumerate().all(|(i, imp)| {
            imp.position as usize == i && (!imp.booked || imp.clicked) && (imp.long_view_seconds <= 0.0 || imp.clicked)
        }) && self.booked_count() <= 1
    }
}
