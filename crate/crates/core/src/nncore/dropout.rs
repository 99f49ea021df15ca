use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Real;

/// Inverted dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1/(1-rate)`, so the expected activation is unchanged. Training only.
pub fn dropout_mask<T: Real>(dim: usize, rate: f64, rng: &mut SeededRng) -> Result<Vec<T>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if rate == 0.0 {
        return Ok(vec![T::one(); dim]);
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    Ok((0..dim)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn zero_rate_is_all_ones() {
        let m: Vec<f64> = dropout_mask(16, 0.0, &mut seeded(1)).unwrap();
        assert!(m.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn half_rate_preserves_mean() {
        let m: Vec<f64> = dropout_mask(10_000, 0.5, &mut seeded(9)).unwrap();
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
        assert!(m.iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn rate_one_rejected() {
        assert!(dropout_mask::<f64>(4, 1.0, &mut seeded(1)).is_err());
        assert!(dropout_mask::<f64>(4, -0.1, &mut seeded(1)).is_err());
    }
}
