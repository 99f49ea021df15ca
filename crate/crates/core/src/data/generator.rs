//! Seeded synthetic marketplace: listings, queries and logged searches.
//!
//! Guests see the listings nearest to their map center, ordered by a noisy
//! prior, and book the one with the highest utility
//!
//! ```text
//! u = a*quality - b*ln(price / city price level) + c*affinity(city, cell)
//!     - position_bias*ln(1 + position) + Gumbel noise
//! ```
//!
//! subject to a per-listing booking cap. Long-view dwell time follows utility
//! plus an appeal term (large, expensive listings) that does not drive
//! bookings.

use rand::Rng;
use rand_distr::{Distribution, Gumbel, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{City, Impression, Listing, Query, RecordSchema, SearchRecord, DYNAMIC_FEATURES};
use crate::error::{Error, Result};
use crate::features::{geo_offsets, grid_cell, DEFAULT_CELL_LEVEL};
use crate::rng::{mix64, substream, SeededRng};

/// "Monthly price logged as daily".
pub const CORRUPTION_PRICE_FACTOR: f64 = 30.0;

const CITY_NAMES: [&str; 12] = [
    "San Francisco",
    "Paris",
    "Tokyo",
    "Lisbon",
    "Cape Town",
    "Buenos Aires",
    "Sydney",
    "Toronto",
    "Seoul",
    "Mexico City",
    "Berlin",
    "Nairobi",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub version: u32,
    pub searches: usize,
    pub listings: usize,
    pub cities: usize,
    pub min_impressions: usize,
    pub max_impressions: usize,
    /// Std of listing coordinates around the city center, degrees.
    pub city_spread_deg: f64,
    /// Std of query map centers around the city center, degrees.
    pub query_spread_deg: f64,
    pub price_median: f64,
    pub price_log_sigma: f64,
    pub city_price_sigma: f64,
    /// Share of luxury listings: pricier and larger, much viewed, rarely booked.
    pub luxury_fraction: f64,
    pub luxury_price_factor: f64,
    /// Prices at or above this are logged as this value.
    pub price_log_ceiling: f64,
    pub quality_weight: f64,
    pub price_weight: f64,
    pub affinity_weight: f64,
    pub position_bias: f64,
    pub utility_noise: f64,
    /// Weight of quality in the ordering shown to guests.
    pub prior_quality: f64,
    pub prior_noise: f64,
    /// A listing is clicked when its utility plus noise is within this much of
    /// the best utility in the search.
    pub click_slack: f64,
    /// Weight of listing appeal in clicks (browsing without booking).
    pub click_appeal_weight: f64,
    pub view_log_seconds: f64,
    pub view_utility_weight: f64,
    pub view_appeal_weight: f64,
    pub view_sigma: f64,
    /// Maximum bookings per listing; `None` removes the cap.
    pub supply_cap: Option<u32>,
    /// Fraction of listings whose logged price is the monthly amount.
    pub corrupted_price_fraction: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            version: 1,
            searches: 12_500,
            listings: 5_000,
            cities: 10,
            min_impressions: 8,
            max_impressions: 24,
            city_spread_deg: 0.03,
            query_spread_deg: 0.01,
            price_median: 120.0,
            price_log_sigma: 0.4,
            city_price_sigma: 0.2,
            luxury_fraction: 0.05,
            luxury_price_factor: 4.0,
            price_log_ceiling: 3000.0,
            quality_weight: 1.0,
            price_weight: 2.0,
            affinity_weight: 0.8,
            position_bias: 0.5,
            utility_noise: 1.0,
            prior_quality: 0.6,
            prior_noise: 1.0,
            click_slack: 3.0,
            click_appeal_weight: 3.0,
            view_log_seconds: 3.6,
            view_utility_weight: 0.4,
            view_appeal_weight: 0.8,
            view_sigma: 0.5,
            supply_cap: Some(2),
            corrupted_price_fraction: 0.0,
        }
    }
}

impl GenConfig {
    /// Dense-booking variant: 50x fewer listings and no supply cap.
    pub fn inflated(&self) -> Self {
        Self {
            listings: (self.listings / 50).max(self.cities),
            supply_cap: None,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.version != 1 {
            return bad(format!("unsupported generator config version {}", self.version));
        }
        if self.searches == 0 || self.listings == 0 || self.cities == 0 {
            return bad("searches, listings and cities must be positive".into());
        }
        if self.cities > self.listings {
            return bad(format!("{} cities but only {} listings", self.cities, self.listings));
        }
        if self.min_impressions < 1
            || self.max_impressions < self.min_impressions
            || self.max_impressions > u16::MAX as usize
        {
            return bad(format!(
                "impressions per search must satisfy 1 <= min ({}) <= max ({})",
                self.min_impressions, self.max_impressions
            ));
        }
        if self.supply_cap == Some(0) {
            return bad("supply_cap must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.corrupted_price_fraction) || !(0.0..=1.0).contains(&self.luxury_fraction) {
            return bad("corrupted_price_fraction and luxury_fraction must lie in [0, 1]".into());
        }
        let reals = [
            self.city_spread_deg,
            self.query_spread_deg,
            self.price_median,
            self.price_log_sigma,
            self.city_price_sigma,
            self.luxury_price_factor,
            self.price_log_ceiling,
            self.quality_weight,
            self.price_weight,
            self.affinity_weight,
            self.position_bias,
            self.utility_noise,
            self.prior_quality,
            self.prior_noise,
            self.click_slack,
            self.click_appeal_weight,
            self.view_log_seconds,
            self.view_utility_weight,
            self.view_appeal_weight,
            self.view_sigma,
        ];
        if reals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("generator coefficients must be finite and non-negative".into());
        }
        if self.price_median <= 0.0 || self.utility_noise <= 0.0 || self.price_log_ceiling <= self.price_median {
            return bad("price_median and utility_noise must be positive, ceiling above the median".into());
        }
        Ok(())
    }
}

/// Everything the generator produces. Queries are indexed by id.
#[derive(Clone, Debug, PartialEq)]
pub struct Marketplace {
    pub cities: Vec<City>,
    pub listings: Vec<Listing>,
    pub queries: Vec<Query>,
    pub schema: RecordSchema,
    pub records: Vec<SearchRecord>,
}

impl Marketplace {
    pub fn city_names(&self) -> Vec<String> {
        self.cities.iter().map(|c| c.name.clone()).collect()
    }
}

fn city_name(i: usize) -> String {
    match CITY_NAMES.get(i) {
        Some(n) => n.to_string(),
        None => format!("City {i}"),
    }
}

/// Deterministic standard-normal location affinity of a (city, cell) pair.
fn affinity(city: u32, cell: u64) -> f64 {
    let h1 = mix64(((city as u64) << 40) ^ cell ^ 0xA5A5_0000_0000_0000);
    let h2 = mix64(h1);
    let u1 = ((h1 >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
    let u2 = (h2 >> 11) as f64 / (1u64 << 53) as f64;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn poisson(rng: &mut SeededRng, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u32
}

pub fn generate_marketplace(config: &GenConfig, seed: u64) -> Result<Marketplace> {
    config.validate()?;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut rng = substream(seed, 1);
    let cities: Vec<City> = (0..config.cities)
        .map(|i| City {
            name: city_name(i),
            center: (rng.random_range(-45.0..55.0), rng.random_range(-170.0..170.0)),
            price_level: (config.city_price_sigma * std_normal.sample(&mut rng)).exp(),
        })
        .collect();

    let mut rng = substream(seed, 2);
    let mut listings = Vec::with_capacity(config.listings);
    let mut cells = Vec::with_capacity(config.listings);
    let mut appeal_raw = Vec::with_capacity(config.listings);
    for id in 0..config.listings {
        let city_idx = id % config.cities;
        let city = &cities[city_idx];
        let lat = (city.center.0 + config.city_spread_deg * std_normal.sample(&mut rng)).clamp(-89.9, 89.9);
        let lng = city.center.1 + config.city_spread_deg * std_normal.sample(&mut rng);
        let quality: f64 = std_normal.sample(&mut rng);
        let long_stay = rng.random::<f64>() < 0.35;
        let avg_length_of_stay = if long_stay {
            (6.5 + 1.2 * std_normal.sample(&mut rng)).clamp(3.5, 11.0)
        } else {
            (2.0 + 0.4 * std_normal.sample(&mut rng)).clamp(1.0, 3.5)
        };
        let nightly_rate = (0.11f64.ln() + 0.25 * std_normal.sample(&mut rng)).exp();
        let occupancy = (nightly_rate * avg_length_of_stay).min(0.97);
        let luxury = rng.random::<f64>() < config.luxury_fraction;
        let mut nightly_price = config.price_median
            * city.price_level
            * (config.price_log_sigma * std_normal.sample(&mut rng) + 0.1 * quality).exp();
        let mut bedrooms = 1 + poisson(&mut rng, 1.0);
        if luxury {
            nightly_price *= config.luxury_price_factor;
            bedrooms += 2;
        }
        let bedrooms = bedrooms.min(8);
        let amenity_count = poisson(&mut rng, (15.0 + 2.0 * quality).max(1.0));
        let review_mean = 30.0 * (0.35 * quality + 0.25 * std_normal.sample(&mut rng)).exp();
        let review_count = poisson(&mut rng, review_mean);
        let booking_mean = 20.0 * (0.35 * quality + 0.25 * std_normal.sample(&mut rng)).exp();
        let historical_bookings = poisson(&mut rng, booking_mean);
        let min_stay = if long_stay { 3 } else { 1 };
        let cell = grid_cell(lat, lng, DEFAULT_CELL_LEVEL)?;
        cells.push(cell.id);
        appeal_raw.push((bedrooms as f64, nightly_price.ln()));
        listings.push(Listing {
            id: id as u64,
            city: city_idx as u32,
            lat,
            lng,
            nightly_price,
            bedrooms,
            amenity_count,
            review_count,
            historical_bookings,
            occupancy,
            avg_length_of_stay,
            min_stay,
            quality,
        });
    }
    // Appeal: standardized bedrooms plus standardized log price.
    let standardize = |xs: Vec<f64>| -> Vec<f64> {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n)
            .sqrt()
            .max(1e-12);
        xs.into_iter().map(|x| (x - mean) / sd).collect()
    };
    let beds = standardize(appeal_raw.iter().map(|a| a.0).collect());
    let lp = standardize(appeal_raw.iter().map(|a| a.1).collect());
    let appeal: Vec<f64> = beds.iter().zip(&lp).map(|(b, p)| (b + p) / 2f64.sqrt()).collect();
    let affinities: Vec<f64> = listings.iter().zip(&cells).map(|(l, &c)| affinity(l.city, c)).collect();

    let mut by_city: Vec<Vec<usize>> = vec![Vec::new(); config.cities];
    for (i, l) in listings.iter().enumerate() {
        by_city[l.city as usize].push(i);
    }

    let gumbel = Gumbel::new(0.0, config.utility_noise).expect("positive scale");
    let mut rng = substream(seed, 3);
    let mut bookings = vec![0u32; listings.len()];
    let mut queries = Vec::with_capacity(config.searches);
    let mut records = Vec::with_capacity(config.searches);
    let mut dist: Vec<(f64, usize)> = Vec::new();
    for qid in 0..config.searches {
        let city_idx = rng.random_range(0..config.cities);
        let pool = &by_city[city_idx];
        let center = cities[city_idx].center;
        let map_center = (
            (center.0 + config.query_spread_deg * std_normal.sample(&mut rng)).clamp(-89.9, 89.9),
            center.1 + config.query_spread_deg * std_normal.sample(&mut rng),
        );
        let query = Query {
            id: qid as u64,
            city: cities[city_idx].name.clone(),
            map_center,
            guest_count: rng.random_range(1..=6),
            stay_length: rng.random_range(1..=14),
        };

        let n = rng
            .random_range(config.min_impressions..=config.max_impressions)
            .min(pool.len());
        dist.clear();
        dist.extend(pool.iter().map(|&i| {
            let (dlat, dlng) = geo_offsets(listings[i].lat, listings[i].lng, map_center.0, map_center.1);
            (dlat * dlat + dlng * dlng, i)
        }));
        if n < dist.len() {
            dist.select_nth_unstable_by(n - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            dist.truncate(n);
        }
        dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut shown: Vec<(f64, usize)> = dist
            .iter()
            .map(|&(_, i)| {
                let prior =
                    config.prior_quality * listings[i].quality + config.prior_noise * std_normal.sample(&mut rng);
                (prior, i)
            })
            .collect();
        shown.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        let level = cities[city_idx].price_level * config.price_median;
        let utilities: Vec<f64> = shown
            .iter()
            .enumerate()
            .map(|(pos, &(_, i))| {
                let l = &listings[i];
                config.quality_weight * l.quality - config.price_weight * (l.nightly_price / level).ln()
                    + config.affinity_weight * affinities[i]
                    - config.position_bias * (1.0 + pos as f64).ln()
                    + gumbel.sample(&mut rng)
            })
            .collect();
        let mut by_utility: Vec<usize> = (0..shown.len()).collect();
        by_utility.sort_by(|&a, &b| utilities[b].total_cmp(&utilities[a]).then(a.cmp(&b)));
        let booked_pos = by_utility
            .iter()
            .copied()
            .find(|&p| config.supply_cap.is_none_or(|cap| bookings[shown[p].1] < cap))
            .unwrap_or(by_utility[0]);
        bookings[shown[booked_pos].1] += 1;
        let best = utilities[by_utility[0]];
        let click_scores: Vec<f64> = shown
            .iter()
            .zip(&utilities)
            .map(|(&(_, i), u)| u + config.click_appeal_weight * appeal[i])
            .collect();
        let best_click = click_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let impressions = shown
            .iter()
            .enumerate()
            .map(|(pos, &(_, i))| {
                let l = &listings[i];
                let booked = pos == booked_pos;
                let clicked =
                    booked || click_scores[pos] + std_normal.sample(&mut rng) > best_click - config.click_slack;
                let long_view_seconds = if clicked {
                    (config.view_log_seconds
                        + config.view_utility_weight * (utilities[pos] - best)
                        + config.view_appeal_weight * appeal[i]
                        + config.view_sigma * std_normal.sample(&mut rng))
                    .exp() as f32
                } else {
                    0.0
                };
                let (dlat, dlng) = geo_offsets(l.lat, l.lng, map_center.0, map_center.1);
                let similarity = 0.5 * (0.35 * l.quality + 0.25 * std_normal.sample(&mut rng)).exp();
                let random_noise = (0.4 * std_normal.sample(&mut rng)).exp();
                Impression {
                    listing_id: l.id,
                    position: pos as u16,
                    clicked,
                    long_view_seconds,
                    booked,
                    features: vec![dlat as f32, dlng as f32, similarity as f32, random_noise as f32, 1.0],
                }
            })
            .collect();
        queries.push(query);
        records.push(SearchRecord {
            query_id: qid as u64,
            city: city_idx as u32,
            impressions,
        });
    }

    // The price logger saturates; corrupted listings log the monthly amount.
    let mut rng = substream(seed, 4);
    for l in &mut listings {
        let corrupt = config.corrupted_price_fraction > 0.0 && rng.random::<f64>() < config.corrupted_price_fraction;
        if corrupt {
            l.nightly_price *= CORRUPTION_PRICE_FACTOR;
        }
        l.nightly_price = l.nightly_price.min(config.price_log_ceiling);
    }

    Ok(Marketplace {
        cities,
        listings,
        queries,
        schema: RecordSchema::new(&DYNAMIC_FEATURES),
        records,
    })
}
