use serde::{Deserialize, Serialize};

use super::geo::{signed_log_offset, DEFAULT_GEO_DELTA};
use super::stats::FeatureStats;
use crate::error::{Error, Result};

/// `(v - mean) / std`.
pub fn zscore_transform(v: f64, mean: f64, std: f64) -> Result<f64> {
    if std <= 0.0 || !std.is_finite() {
        return Err(Error::DegenerateFeature(format!("zscore with std {std}")));
    }
    Ok((v - mean) / std)
}

/// `ln((1 + v) / (1 + median))` for non-negative, heavy-tailed values.
pub fn powerlaw_transform(v: f64, median: f64) -> Result<f64> {
    if v < 0.0 || median < 0.0 {
        return Err(Error::invalid(format!(
            "powerlaw transform needs non-negative inputs (v = {v}, median = {median})"
        )));
    }
    Ok(((1.0 + v) / (1.0 + median)).ln())
}

/// Occupancy divided by the listing's average length of stay. Stays below one
/// night are clamped to one.
pub fn normalize_occupancy(occupancy: f64, avg_length_of_stay: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&occupancy) {
        return Err(Error::invalid(format!("occupancy {occupancy} outside [0, 1]")));
    }
    let stay = if avg_length_of_stay < 1.0 || avg_length_of_stay.is_nan() {
        log::warn!("average length of stay {avg_length_of_stay} < 1, clamped to 1");
        1.0
    } else {
        avg_length_of_stay
    };
    Ok(occupancy / stay)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    CategoricalHash,
    Geo,
}

/// A fitted, frozen transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Zscore {
        mean: f64,
        std: f64,
    },
    Powerlaw {
        median: f64,
    },
    GeoLogOffset {
        delta: f64,
    },
    None,
    /// Degenerate feature: always emits 0.
    Drop,
}

impl Transform {
    pub fn apply(&self, v: f64) -> Result<f64> {
        match *self {
            Transform::Zscore { mean, std } => zscore_transform(v, mean, std),
            Transform::Powerlaw { median } => powerlaw_transform(v.max(0.0), median),
            Transform::GeoLogOffset { delta } => Ok(signed_log_offset(v, delta)),
            Transform::None => Ok(v),
            Transform::Drop => Ok(0.0),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Transform::Zscore { .. } => "zscore",
            Transform::Powerlaw { .. } => "powerlaw",
            Transform::GeoLogOffset { .. } => "geo_log_offset",
            Transform::None => "none",
            Transform::Drop => "drop",
        }
    }
}

/// Transform selection in configs: `auto` defers to [`choose_transform`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformChoice {
    #[default]
    Auto,
    Zscore,
    Powerlaw,
    GeoLogOffset,
    None,
    Drop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub choice: TransformChoice,
    pub rationale: String,
}

/// Power law when the sample is non-negative and strongly right skewed
/// (skewness > 2), z-score otherwise; drop degenerate features.
pub fn choose_transform(stats: &FeatureStats) -> Recommendation {
    if stats.degenerate {
        return Recommendation {
            choice: TransformChoice::Drop,
            rationale: format!("`{}` is constant ({}); drop it or re-bucket", stats.name, stats.min),
        };
    }
    if stats.skewness > 2.0 && stats.min >= 0.0 {
        Recommendation {
            choice: TransformChoice::Powerlaw,
            rationale: format!(
                "`{}` is non-negative with skewness {:.2} > 2: heavy tail, use ln((1+v)/(1+median))",
                stats.name, stats.skewness
            ),
        }
    } else {
        Recommendation {
            choice: TransformChoice::Zscore,
            rationale: format!(
                "`{}` has skewness {:.2} (min {:.3}): close enough to normal for (v-mean)/std",
                stats.name, stats.skewness, stats.min
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub transform: Transform,
    pub stats: FeatureStats,
}

impl FeatureSpec {
    /// Freezes `choice` against statistics fitted on the training split.
    pub fn fit(name: &str, kind: FeatureKind, choice: TransformChoice, stats: FeatureStats) -> Result<Self> {
        let choice = match (choice, kind) {
            (TransformChoice::Auto, FeatureKind::Geo) => TransformChoice::GeoLogOffset,
            (TransformChoice::Auto, _) => choose_transform(&stats).choice,
            (c, _) => c,
        };
        let transform = match choice {
            TransformChoice::Zscore if stats.degenerate => return Err(Error::DegenerateFeature(name.to_string())),
            TransformChoice::Zscore => Transform::Zscore {
                mean: stats.mean,
                std: stats.std,
            },
            TransformChoice::Powerlaw if stats.min < 0.0 => {
                return Err(Error::invalid(format!(
                    "`{name}` has negative values; powerlaw needs v >= 0"
                )))
            }
            TransformChoice::Powerlaw => Transform::Powerlaw { median: stats.median },
            TransformChoice::GeoLogOffset => Transform::GeoLogOffset {
                delta: DEFAULT_GEO_DELTA,
            },
            TransformChoice::None => Transform::None,
            TransformChoice::Drop => Transform::Drop,
            TransformChoice::Auto => unreachable!("resolved above"),
        };
        Ok(Self {
            name: name.to_string(),
            kind,
            transform,
            stats,
        })
    }

    pub fn apply(&self, v: f64) -> Result<f64> {
        let out = self.transform.apply(v)?;
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::NonFinite(format!(
                "feature `{}` transformed {v} to {out}",
                self.name
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::stats::fit_feature_stats;
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand_distr::{Distribution, LogNormal, Normal};

    #[test]
    fn zscore_examples() {
        assert_eq!(zscore_transform(4.0, 4.0, 3.0).unwrap(), 0.0);
        assert_eq!(zscore_transform(7.0, 4.0, 3.0).unwrap(), 1.0);
        assert_eq!(zscore_transform(10.0, 4.0, 3.0).unwrap(), 2.0);
        assert!(matches!(
            zscore_transform(1.0, 1.0, 0.0),
            Err(Error::DegenerateFeature(_))
        ));
    }

    #[test]
    fn powerlaw_examples() {
        assert_eq!(powerlaw_transform(9.0, 9.0).unwrap(), 0.0);
        assert_eq!(powerlaw_transform(0.0, 0.0).unwrap(), 0.0);
        assert!((powerlaw_transform(99.0, 9.0).unwrap() - 10f64.ln()).abs() < 1e-15);
        assert!(powerlaw_transform(-1.0, 9.0).is_err());
    }

    #[test]
    fn occupancy_examples() {
        assert_eq!(normalize_occupancy(0.5, 2.0).unwrap(), 0.25);
        assert_eq!(normalize_occupancy(0.0, 7.0).unwrap(), 0.0);
        assert_eq!(normalize_occupancy(0.4, 0.5).unwrap(), 0.4);
        assert!(normalize_occupancy(1.5, 2.0).is_err());
    }

    #[test]
    fn recommendations() {
        let mut rng = seeded(5);
        let normal = Normal::new(10.0, 2.0).unwrap();
        let v: Vec<f64> = (0..50_000).map(|_| normal.sample(&mut rng)).collect();
        let r = choose_transform(&fit_feature_stats("n", &v).unwrap());
        assert_eq!(r.choice, TransformChoice::Zscore);

        // heavy-tailed booking counts
        let tail = LogNormal::<f64>::new(1.0, 1.2).unwrap();
        let v: Vec<f64> = (0..50_000).map(|_| tail.sample(&mut rng).floor()).collect();
        let r = choose_transform(&fit_feature_stats("bookings", &v).unwrap());
        assert_eq!(r.choice, TransformChoice::Powerlaw);

        let r = choose_transform(&fit_feature_stats("c", &[1.0; 10]).unwrap());
        assert_eq!(r.choice, TransformChoice::Drop);
    }

    #[test]
    fn fit_rejects_bad_overrides() {
        let c = fit_feature_stats("c", &[1.0; 10]).unwrap();
        assert!(FeatureSpec::fit("c", FeatureKind::Numeric, TransformChoice::Zscore, c.clone()).is_err());
        let spec = FeatureSpec::fit("c", FeatureKind::Numeric, TransformChoice::Auto, c).unwrap();
        assert_eq!(spec.transform, Transform::Drop);
        let neg = fit_feature_stats("n", &[-1.0, 2.0, 3.0]).unwrap();
        assert!(FeatureSpec::fit("n", FeatureKind::Numeric, TransformChoice::Powerlaw, neg).is_err());
    }

    proptest! {
        #[test]
        fn transforms_are_monotone(a in 0.0f64..1e6, b in 0.0f64..1e6, med in 0.0f64..1e4, mean in -10.0f64..10.0, std in 0.01f64..100.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(powerlaw_transform(lo, med).unwrap() <= powerlaw_transform(hi, med).unwrap());
            prop_assert!(zscore_transform(lo, mean, std).unwrap() <= zscore_transform(hi, mean, std).unwrap());
            prop_assert!(signed_log_offset(lo - 5e5, 0.01) <= signed_log_offset(hi - 5e5, 0.01));
        }
    }
}
