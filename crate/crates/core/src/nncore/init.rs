use rand::Rng;

use super::EmbeddingTable;
use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::scalar::Real;

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Xavier/Glorot uniform: `fan_out x fan_in` entries in `±sqrt(6/(fan_in+fan_out))`.
pub fn xavier_init<T: Real>(fan_in: usize, fan_out: usize, seed: u64) -> Result<Vec<T>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::invalid(format!(
            "xavier_init needs fan_in, fan_out >= 1 (got {fan_in}, {fan_out})"
        )));
    }
    let bound = xavier_bound(fan_in, fan_out);
    let mut rng = seeded(seed);
    Ok((0..fan_in * fan_out)
        .map(|_| T::lit(symmetric_unit(&mut rng) * bound))
        .collect())
}

/// Trainable table with entries uniform in [-1, 1].
pub fn embedding_init<T: Real>(bucket_count: usize, dim: usize, seed: u64) -> Result<EmbeddingTable<T>> {
    if bucket_count == 0 || dim == 0 {
        return Err(Error::invalid(format!(
            "embedding needs bucket_count, dim >= 1 (got {bucket_count}, {dim})"
        )));
    }
    let mut rng = seeded(seed);
    Ok(EmbeddingTable {
        name: String::new(),
        bucket_count,
        dim,
        trainable: true,
        values: (0..bucket_count * dim)
            .map(|_| T::lit(symmetric_unit(&mut rng)))
            .collect(),
    })
}

/// Uniform on [-1, 1).
fn symmetric_unit<R: Rng>(rng: &mut R) -> f64 {
    2.0 * rng.random::<f64>() - 1.0
}
