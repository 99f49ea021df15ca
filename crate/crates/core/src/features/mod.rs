//! Feature statistics, normalization transforms, distribution diagnostics,
//! geo transforms and hashed categorical crossings.

mod geo;
mod hashing;
mod smoothness;
mod stats;
mod transform;

pub use geo::{
    geo_offset_transform, geo_offsets, grid_cell, signed_log_offset, CellId, DEFAULT_CELL_LEVEL, DEFAULT_GEO_DELTA,
};
pub use hashing::{fnv1a64, hash_cross, EMPTY_CITY_TOKEN};
pub use smoothness::{smoothness_report, SmoothnessReport, Spike, SpikeConfig};
pub use stats::{
    bimodality_coefficient, fit_feature_stats, percentile_sorted, FeatureStats, Histogram, HISTOGRAM_BINS,
};
pub use transform::{
    choose_transform, normalize_occupancy, powerlaw_transform, zscore_transform, FeatureKind, FeatureSpec,
    Recommendation, Transform, TransformChoice,
};
