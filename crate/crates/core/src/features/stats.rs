use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HISTOGRAM_BINS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Equal-width bins over `[lo, hi]`; values outside the range land in the
    /// first or last bin so that counts always sum to the sample count.
    pub fn build(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0u64; bins];
        for &v in values {
            counts[Self::bin_of(v, lo, width, bins)] += 1;
        }
        Self { edges, counts }
    }

    fn bin_of(v: f64, lo: f64, width: f64, bins: usize) -> usize {
        if width <= 0.0 {
            return 0;
        }
        let b = ((v - lo) / width).floor();
        if b < 0.0 {
            0
        } else {
            (b as usize).min(bins - 1)
        }
    }

    pub fn bin_index(&self, v: f64) -> usize {
        let bins = self.counts.len();
        let lo = self.edges[0];
        let width = (self.edges[bins] - lo) / bins as f64;
        Self::bin_of(v, lo, width, bins)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.edges[i], self.edges[i + 1], c));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub name: String,
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub median: f64,
    pub skewness: f64,
    pub min: f64,
    pub max: f64,
    /// Zero variance: the feature carries no information.
    pub degenerate: bool,
    pub histogram: Histogram,
}

/// Linear interpolation between closest ranks.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Exact statistics (two-pass moments, median by full sort) plus a
/// [`HISTOGRAM_BINS`]-bin histogram over the 0.1..99.9 percentile range.
pub fn fit_feature_stats(name: &str, samples: &[f64]) -> Result<FeatureStats> {
    if samples.len() < 2 {
        return Err(Error::invalid(format!(
            "feature `{name}` needs >= 2 samples, got {}",
            samples.len()
        )));
    }
    if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("feature `{name}` sample {i}")));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let (mut m2, mut m3) = (0.0, 0.0);
    for &v in samples {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    let std = m2.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let degenerate = min == max;
    let skewness = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    let median = percentile_sorted(&sorted, 0.5);
    let (mut lo, mut hi) = (percentile_sorted(&sorted, 0.001), percentile_sorted(&sorted, 0.999));
    if lo >= hi {
        (lo, hi) = if degenerate { (min - 0.5, max + 0.5) } else { (min, max) };
    }
    Ok(FeatureStats {
        name: name.to_string(),
        count: samples.len(),
        mean,
        std: if degenerate { 0.0 } else { std },
        median,
        skewness,
        min,
        max,
        degenerate,
        histogram: Histogram::build(samples, lo, hi, HISTOGRAM_BINS),
    })
}

/// Sarle's bimodality coefficient `(g^2 + 1) / (k + 3(n-1)^2/((n-2)(n-3)))`
/// with sample skewness `g` and excess kurtosis `k`. Values above 5/9 (the
/// uniform distribution's value) suggest bi- or multimodality.
pub fn bimodality_coefficient(samples: &[f64]) -> Result<f64> {
    let n = samples.len();
    if n < 4 {
        return Err(Error::invalid("bimodality coefficient needs >= 4 samples"));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in samples {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 == 0.0 {
        return Err(Error::DegenerateFeature("bimodality input".into()));
    }
    let g1 = m3 / m2.powf(1.5);
    let g2 = m4 / (m2 * m2) - 3.0;
    // bias-corrected sample skewness and kurtosis
    let skew = g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0);
    let kurt = (nf - 1.0) / ((nf - 2.0) * (nf - 3.0)) * ((nf + 1.0) * g2 + 6.0);
    Ok((skew * skew + 1.0) / (kurt + 3.0 * (nf - 1.0).powi(2) / ((nf - 2.0) * (nf - 3.0))))
}
