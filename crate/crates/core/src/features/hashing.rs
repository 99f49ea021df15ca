use super::geo::CellId;
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Stand-in for an empty city name.
pub const EMPTY_CITY_TOKEN: &str = "∅";

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Bucket of the (query city, listing cell) crossing.
///
/// 64-bit FNV-1a over the UTF-8 city bytes, a `|` byte and the cell id as
/// 8 little-endian bytes, masked to `bucket_count - 1`.
pub fn hash_cross(city: &str, cell: CellId, bucket_count: u64) -> Result<u64> {
    if bucket_count < 2 || !bucket_count.is_power_of_two() {
        return Err(Error::invalid(format!(
            "bucket_count must be a power of two >= 2, got {bucket_count}"
        )));
    }
    let city = if city.is_empty() { EMPTY_CITY_TOKEN } else { city };
    let mut key = Vec::with_capacity(city.len() + 9);
    key.extend_from_slice(city.as_bytes());
    key.push(b'|');
    key.extend_from_slice(&cell.id.to_le_bytes());
    Ok(fnv1a64(&key) & (bucket_count - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn pinned_crossing() {
        // computed once from an independent FNV-1a implementation
        let cell = CellId {
            level: 12,
            id: 539_058_204,
        };
        assert_eq!(hash_cross("San Francisco", cell, 1 << 20).unwrap(), 36_328);
        assert_eq!(hash_cross("", CellId { level: 12, id: 0 }, 1 << 16).unwrap(), 50_174);
        assert_eq!(
            hash_cross("", CellId { level: 12, id: 0 }, 1 << 16).unwrap(),
            hash_cross(EMPTY_CITY_TOKEN, CellId { level: 12, id: 0 }, 1 << 16).unwrap()
        );
    }

    #[test]
    fn bucket_count_validation() {
        let c = CellId { level: 12, id: 1 };
        assert!(hash_cross("x", c, 1).is_err());
        assert!(hash_cross("x", c, 1000).is_err());
        for b in [2u64, 16, 1 << 20] {
            assert!(hash_cross("x", c, b).unwrap() < b);
        }
    }

    #[test]
    fn load_is_balanced() {
        let buckets = 1u64 << 16;
        let mut load = vec![0u32; buckets as usize];
        for city in 0..100 {
            let name = format!("city-{city}");
            for cell in 0..1000u64 {
                let b = hash_cross(
                    &name,
                    CellId {
                        level: 12,
                        id: cell * 7919,
                    },
                    buckets,
                )
                .unwrap();
                load[b as usize] += 1;
            }
        }
        // mean over occupied buckets: with 1.5 keys per bucket an ideal hash
        // already puts ~8 keys in its fullest bucket
        let occupied = load.iter().filter(|&&l| l > 0).count() as f64;
        let mean = 100_000.0 / occupied;
        let max = *load.iter().max().unwrap() as f64;
        assert!(max <= 5.0 * mean, "max load {max}, mean {mean}");
    }
}
