use serde::{Deserialize, Serialize};

use super::stats::FeatureStats;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpikeConfig {
    /// A bin must exceed this multiple of its neighbourhood median.
    pub factor: f64,
    /// Neighbourhood: this many occupied bins on each side. Empty bins are
    /// skipped so integer-valued features, whose values sit on a lattice of
    /// bins with gaps between them, are compared against adjacent values.
    pub half_window: usize,
    /// A bin must also hold more than this fraction of all samples.
    pub min_fraction: f64,
}

impl Default for SpikeConfig {
    fn default() -> Self {
        Self {
            factor: 3.0,
            half_window: 5,
            min_fraction: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub bin: usize,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: u64,
    pub neighbourhood_median: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub feature: String,
    pub spikes: Vec<Spike>,
}

impl SmoothnessReport {
    pub fn is_smooth(&self) -> bool {
        self.spikes.is_empty()
    }

    pub fn verdict(&self) -> &'static str {
        if self.is_smooth() {
            "smooth"
        } else {
            "spiky"
        }
    }
}

/// Flags histogram bins that tower over their neighbours. Buggy values (a
/// unit mix-up, a default sentinel) tend to pile up where the real
/// distribution is thin, which shows up as an isolated spike. A bin is flagged
/// when it exceeds `factor` times both its neighbourhood median and the larger
/// of its two adjacent occupied bins (so the mode of a steep discrete
/// distribution is not mistaken for a spike). Constant features are reported
/// as degenerate elsewhere and never flagged here.
pub fn smoothness_report(stats: &FeatureStats, config: &SpikeConfig) -> Result<SmoothnessReport> {
    let counts = &stats.histogram.counts;
    let min_bins = 2 * config.half_window + 1;
    if counts.len() < min_bins {
        return Err(Error::invalid(format!(
            "smoothness needs >= {min_bins} bins, histogram has {}",
            counts.len()
        )));
    }
    let total = stats.histogram.total() as f64;
    let mut spikes = Vec::new();
    if stats.degenerate {
        return Ok(SmoothnessReport {
            feature: stats.name.clone(),
            spikes,
        });
    }
    let mut window = Vec::with_capacity(2 * config.half_window);
    for (j, &c) in counts.iter().enumerate() {
        if (c as f64) <= config.min_fraction * total {
            continue;
        }
        window.clear();
        let occupied = |k: &usize| counts[*k] > 0;
        let left = (0..j).rev().find(occupied).map_or(0, |k| counts[k]);
        let right = (j + 1..counts.len()).find(occupied).map_or(0, |k| counts[k]);
        window.extend(
            (0..j)
                .rev()
                .filter(occupied)
                .take(config.half_window)
                .map(|k| counts[k] as f64),
        );
        window.extend(
            (j + 1..counts.len())
                .filter(occupied)
                .take(config.half_window)
                .map(|k| counts[k] as f64),
        );
        window.sort_by(f64::total_cmp);
        let median = if window.is_empty() {
            0.0
        } else if window.len() % 2 == 1 {
            window[window.len() / 2]
        } else {
            0.5 * (window[window.len() / 2 - 1] + window[window.len() / 2])
        };
        if c as f64 > config.factor * median && c as f64 > config.factor * left.max(right) as f64 {
            spikes.push(Spike {
                bin: j,
                bin_lo: stats.histogram.edges[j],
                bin_hi: stats.histogram.edges[j + 1],
                count: c,
                neighbourhood_median: median,
            });
        }
    }
    Ok(SmoothnessReport {
        feature: stats.name.clone(),
        spikes,
    })
}
