use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Listing, STATIC_FEATURES};
use crate::error::{Error, Result};
use crate::features::normalize_occupancy;

/// What assembly does with a listing id the store does not know.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoreMode {
    #[default]
    Strict,
    /// Skip the impression and count it.
    Lenient,
}

/// In-memory table of quasi-static listing features keyed by listing id.
///
/// Rows hold raw (untransformed) values. Listing coordinates ride along for
/// the geo and cell-cross features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticFeatureStore {
    names: Vec<String>,
    ids: Vec<u64>,
    locations: Vec<(f64, f64)>,
    values: Vec<f32>,
    #[serde(skip)]
    index: HashMap<u64, usize>,
}

/// Raw value of a static feature for one listing.
pub fn static_feature_value(listing: &Listing, name: &str) -> Result<f64> {
    Ok(match name {
        "price" => listing.nightly_price,
        "bedrooms" => listing.bedrooms as f64,
        "amenity_count" => listing.amenity_count as f64,
        "review_count" => listing.review_count as f64,
        "historical_bookings" => listing.historical_bookings as f64,
        "occupancy_per_stay" => normalize_occupancy(listing.occupancy, listing.avg_length_of_stay)?,
        "avg_length_of_stay" => listing.avg_length_of_stay,
        "occupancy" => listing.occupancy,
        other => return Err(Error::UnknownFeature(other.to_string())),
    })
}

impl StaticFeatureStore {
    pub fn build<S: AsRef<str>>(listings: &[Listing], names: &[S]) -> Result<Self> {
        let names: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        let mut store = Self {
            values: Vec::with_capacity(listings.len() * names.len()),
            ids: Vec::with_capacity(listings.len()),
            locations: Vec::with_capacity(listings.len()),
            index: HashMap::with_capacity(listings.len()),
            names,
        };
        for listing in listings {
            if store.index.insert(listing.id, store.ids.len()).is_some() {
                return Err(Error::invalid(format!("duplicate listing id {}", listing.id)));
            }
            store.ids.push(listing.id);
            store.locations.push((listing.lat, listing.lng));
            for name in &store.names {
                store.values.push(static_feature_value(listing, name)? as f32);
            }
        }
        Ok(store)
    }

    /// Store over the default static feature set.
    pub fn build_default(listings: &[Listing]) -> Result<Self> {
        Self::build(listings, &STATIC_FEATURES)
    }

    /// Rebuilds from parts, e.g. when loading a model file.
    pub fn from_parts(names: Vec<String>, ids: Vec<u64>, locations: Vec<(f64, f64)>, values: Vec<f32>) -> Result<Self> {
        if locations.len() != ids.len() || values.len() != ids.len() * names.len() {
            return Err(Error::invalid("static store parts have inconsistent lengths"));
        }
        let mut store = Self {
            names,
            ids,
            locations,
            values,
            index: HashMap::new(),
        };
        store.reindex()?;
        Ok(store)
    }

    /// Restores the id index after deserialization.
    pub fn reindex(&mut self) -> Result<()> {
        self.index = HashMap::with_capacity(self.ids.len());
        for (row, &id) in self.ids.iter().enumerate() {
            if self.index.insert(id, row).is_some() {
                return Err(Error::invalid(format!("duplicate listing id {id}")));
            }
        }
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn locations(&self) -> &[(f64, f64)] {
        &self.locations
    }

    pub fn row_of(&self, listing_id: u64) -> Option<usize> {
        self.index.get(&listing_id).copied()
    }

    pub fn row(&self, row: usize) -> &[f32] {
        let d = self.dim();
        &self.values[row * d..(row + 1) * d]
    }

    pub fn location(&self, row: usize) -> (f64, f64) {
        self.locations[row]
    }

    pub fn get(&self, listing_id: u64) -> Option<&[f32]> {
        self.row_of(listing_id).map(|r| self.row(r))
    }

    pub fn lookup(&self, listing_id: u64) -> Result<usize> {
        self.row_of(listing_id).ok_or(Error::UnknownListing(listing_id))
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    /// Copy with one feature multiplied by `factor` for every listing.
    pub fn scaled(&self, name: &str, factor: f64) -> Result<Self> {
        let j = self.feature_index(name)?;
        let mut out = self.clone();
        let d = self.dim();
        for row in out.values.chunks_exact_mut(d) {
            row[j] = (row[j] as f64 * factor) as f32;
        }
        Ok(out)
    }
}
