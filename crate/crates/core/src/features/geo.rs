use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offset scale of the signed-log geo transform, in degrees.
pub const DEFAULT_GEO_DELTA: f64 = 0.01;
pub const DEFAULT_CELL_LEVEL: u8 = 12;

/// Raw `(d_lat, d_lng)` from the map center, with `d_lng` wrapped into
/// [-180, 180].
pub fn geo_offsets(lat: f64, lng: f64, center_lat: f64, center_lng: f64) -> (f64, f64) {
    let d_lat = lat - center_lat;
    let mut d_lng = (lng - center_lng).rem_euclid(360.0);
    if d_lng > 180.0 {
        d_lng -= 360.0;
    }
    (d_lat, d_lng)
}

/// `sign(d) * ln(1 + |d| / delta)`.
#[inline]
pub fn signed_log_offset(d: f64, delta: f64) -> f64 {
    d.signum() * (d.abs() / delta).ln_1p()
}

/// Signed-log offsets of a listing from the displayed map center. Many
/// locations map to the same output: only the offset survives.
pub fn geo_offset_transform(lat: f64, lng: f64, center_lat: f64, center_lng: f64, delta: f64) -> (f64, f64) {
    let (d_lat, d_lng) = geo_offsets(lat, lng, center_lat, center_lng);
    (signed_log_offset(d_lat, delta), signed_log_offset(d_lng, delta))
}

/// Cell of an equirectangular `2^level x 2^level` grid over the globe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub level: u8,
    pub id: u64,
}

pub fn grid_cell(lat: f64, lng: f64, level: u8) -> Result<CellId> {
    if !(1..=16).contains(&level) {
        return Err(Error::invalid(format!("cell level {level} outside [1, 16]")));
    }
    if !lat.is_finite() || !lng.is_finite() {
        return Err(Error::NonFinite(format!("coordinates ({lat}, {lng})")));
    }
    let side = 1u64 << level;
    let row = ((lat + 90.0) / 180.0 * side as f64)
        .floor()
        .clamp(0.0, (side - 1) as f64) as u64;
    let col = ((lng + 180.0) / 360.0 * side as f64).floor() as i64;
    let col = col.rem_euclid(side as i64) as u64;
    Ok(CellId {
        level,
        id: row * side + col,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn center_maps_to_origin() {
        assert_eq!(geo_offset_transform(37.7, -122.4, 37.7, -122.4, 0.01), (0.0, 0.0));
    }

    #[test]
    fn sign_is_preserved() {
        let (x, y) = geo_offset_transform(37.6, -122.5, 37.7, -122.4, 0.01);
        assert!(x < 0.0 && y < 0.0);
    }

    #[test]
    fn pinned_log_offset() {
        let (_, y) = geo_offset_transform(0.0, 10.99, 0.0, 10.0, 0.01);
        assert!((y - 100f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn longitude_wraps_across_antimeridian() {
        let (_, d) = geo_offsets(0.0, -179.5, 0.0, 179.5);
        assert!((d - 1.0).abs() < 1e-9);
        let (_, d) = geo_offsets(0.0, 179.5, 0.0, -179.5);
        assert!((d + 1.0).abs() < 1e-9);
    }

    #[test]
    fn equal_offsets_collide() {
        let a = geo_offset_transform(10.05, 20.02, 10.0, 20.0, 0.01);
        let b = geo_offset_transform(-33.95, 151.02, -34.0, 151.0, 0.01);
        assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
    }

    #[test]
    fn pinned_cells() {
        assert_eq!(grid_cell(-90.0, -180.0, 12).unwrap().id, 0);
        assert_eq!(grid_cell(0.0, 0.0, 12).unwrap().id, 8_390_656);
        assert_eq!(grid_cell(90.0, 180.0, 12).unwrap().id, 4095 * 4096);
        assert_eq!(grid_cell(12.3, 45.6, 12).unwrap(), grid_cell(12.3, 45.6, 12).unwrap());
        assert!(grid_cell(0.0, 0.0, 0).is_err());
        assert!(grid_cell(0.0, 0.0, 17).is_err());
    }

    #[test]
    fn cell_ids_stay_in_range() {
        for level in 1..=16u8 {
            for (lat, lng) in [(-90.0, -180.0), (90.0, 180.0), (45.0, -720.5), (-12.0, 359.9)] {
                let c = grid_cell(lat, lng, level).unwrap();
                assert!(c.id < 1u64 << (2 * level as u32));
            }
        }
    }
}
