//! Seeded synthetic market of edible-apple offers and orders.
//!
//! Quantities follow a log-normal shape rescaled to fixed totals, list prices
//! are truncated normals, price bounds and minimum trade sizes are derived
//! from them, and locations are jittered county centroids. The ChaCha8 stream
//! makes every output a pure function of the seed.

use std::collections::HashSet;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoPoint, PostcodeIndex};
use crate::io::{self, IoError};
use crate::model::{Offer, Order};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct County {
    pub name: &'static str,
    pub code: &'static str,
    pub lat: f64,
    pub lon: f64,
    pub weight: f64,
}

const fn county(name: &'static str, code: &'static str, lat: f64, lon: f64, weight: f64) -> County {
    County {
        name,
        code,
        lat,
        lon,
        weight,
    }
}

/// Apple-growing counties of England, weighted toward Kent, Herefordshire and
/// Worcestershire.
pub const COUNTIES: [County; 14] = [
    county("Kent", "ME", 51.19, 0.73, 0.30),
    county("Herefordshire", "HR", 52.06, -2.72, 0.18),
    county("Worcestershire", "WR", 52.19, -2.22, 0.14),
    county("Somerset", "TA", 51.02, -3.10, 0.05),
    county("Gloucestershire", "GL", 51.86, -2.24, 0.05),
    county("East Sussex", "TN", 50.95, 0.35, 0.04),
    county("Essex", "CM", 51.75, 0.55, 0.04),
    county("Suffolk", "IP", 52.19, 1.00, 0.04),
    county("Norfolk", "NR", 52.63, 1.30, 0.03),
    county("Cambridgeshire", "CB", 52.30, 0.05, 0.03),
    county("Devon", "EX", 50.72, -3.53, 0.03),
    county("Shropshire", "SY", 52.71, -2.75, 0.03),
    county("Lincolnshire", "LN", 53.23, -0.54, 0.02),
    county("North Yorkshire", "YO", 53.96, -1.08, 0.02),
];

/// Maximum absolute offset, in degrees, added to a county centroid.
pub const LOCATION_JITTER_DEG: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub seed: u64,
    pub n_orders: usize,
    pub n_offers: usize,
    pub product_id: String,
    pub demand_price_mean: f64,
    pub demand_price_sd: f64,
    pub supply_price_mean: f64,
    pub supply_price_sd: f64,
    pub total_demand: f64,
    pub total_supply: f64,
    /// Shapes of the log-normal quantity draws before rescaling.
    pub demand_quantity_sigma: f64,
    pub supply_quantity_sigma: f64,
    /// Probability that an offer is priced far above every buyer's range.
    /// Such offers can never clear the price check and form the leftover.
    pub misaligned_offer_share: f64,
    /// Range of the multiplier applied to a misaligned offer's list price.
    pub misaligned_price_factor: (f64, f64),
    pub order_expiry_anchor: NaiveDate,
    pub offer_expiry_anchor: NaiveDate,
    pub expiry_spread_days: u64,
    pub fulfil_lead_days: u64,
    pub validity_year: i32,
    pub production_start: NaiveDate,
    pub production_spread_days: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        let d = |y, m, d| NaiveDate::from_ymd_opt(y, m, d).expect("valid date");
        GenConfig {
            seed: 42,
            n_orders: 118,
            n_offers: 932,
            product_id: "edible".to_string(),
            demand_price_mean: 1061.2,
            demand_price_sd: 42.56,
            supply_price_mean: 1062.84,
            supply_price_sd: 43.57,
            total_demand: 505_198.0,
            total_supply: 192_768.0,
            demand_quantity_sigma: 1.0,
            supply_quantity_sigma: 1.0,
            misaligned_offer_share: 0.04,
            misaligned_price_factor: (5.5, 6.5),
            order_expiry_anchor: d(2025, 10, 20),
            offer_expiry_anchor: d(2025, 10, 27),
            expiry_spread_days: 7,
            fulfil_lead_days: 7,
            validity_year: 2025,
            production_start: d(2025, 9, 1),
            production_spread_days: 30,
        }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {source}")]
    CreateDir {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub offers: Vec<Offer>,
    pub orders: Vec<Order>,
    pub postcodes: PostcodeIndex,
}

impl GenConfig {
    fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::Config(m.to_string()));
        if self.n_orders == 0 || self.n_offers == 0 {
            return bad("counts must be positive");
        }
        if self.demand_price_sd < 0.0
            || self.supply_price_sd < 0.0
            || self.demand_quantity_sigma < 0.0
            || self.supply_quantity_sigma < 0.0
        {
            return bad("standard deviations must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.misaligned_offer_share) {
            return bad("misaligned_offer_share must lie in [0, 1]");
        }
        let (lo, hi) = self.misaligned_price_factor;
        if !(lo > 0.0 && lo <= hi) {
            return bad("misaligned_price_factor must be a positive, ordered range");
        }
        if self.demand_price_mean <= 0.0 || self.supply_price_mean <= 0.0 {
            return bad("price means must be positive");
        }
        // every entity needs at least 1 kg
        if self.total_demand * 1000.0 < self.n_orders as f64 || self.total_supply * 1000.0 < self.n_offers as f64 {
            return bad("totals too small for the entity counts");
        }
        if NaiveDate::from_ymd_opt(self.validity_year, 1, 1).is_none() {
            return bad("validity year out of range");
        }
        Ok(())
    }
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (x * s).round() / s
}

/// Log-normal weights rescaled to `total`, in whole kilograms, summing exactly.
fn quantities_kg<R: Rng>(rng: &mut R, n: usize, total: f64, sigma: f64) -> Vec<u64> {
    let shape = LogNormal::new(0.0, sigma).expect("sigma checked non-negative");
    let raw: Vec<f64> = (0..n).map(|_| shape.sample(rng)).collect();
    let sum: f64 = raw.iter().sum();
    let total_kg = (total * 1000.0).round() as u64;
    let mut kg: Vec<u64> = raw
        .iter()
        .map(|x| ((x / sum * total_kg as f64).round() as u64).max(1))
        .collect();
    let largest = (0..n)
        .max_by(|&a, &b| kg[a].cmp(&kg[b]).then(b.cmp(&a)))
        .expect("n > 0");
    let rest: u64 = kg.iter().sum::<u64>() - kg[largest];
    kg[largest] = total_kg - rest;
    kg
}

fn truncated_normal<R: Rng>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 4.0 {
            return round_to(mean + sd * z, 2);
        }
    }
}

fn offset_date<R: Rng>(rng: &mut R, anchor: NaiveDate, spread: u64) -> NaiveDate {
    let k = rng.random_range(0..=2 * spread);
    anchor - Days::new(spread) + Days::new(k)
}

struct Locator {
    cumulative: Vec<f64>,
    counters: Vec<usize>,
    index: PostcodeIndex,
}

impl Locator {
    fn new() -> Self {
        let mut acc = 0.0;
        let cumulative = COUNTIES
            .iter()
            .map(|c| {
                acc += c.weight;
                acc
            })
            .collect();
        Locator {
            cumulative,
            counters: vec![0; COUNTIES.len()],
            index: PostcodeIndex::new(),
        }
    }

    /// Draws a county, jitters its centroid and registers a fresh code.
    fn next<R: Rng>(&mut self, rng: &mut R) -> String {
        let total = *self.cumulative.last().expect("non-empty table");
        let u = rng.random_range(0.0..total);
        let c = self
            .cumulative
            .iter()
            .position(|&x| u < x)
            .unwrap_or(COUNTIES.len() - 1);
        let lat = COUNTIES[c].lat + rng.random_range(-LOCATION_JITTER_DEG..=LOCATION_JITTER_DEG);
        let lon = COUNTIES[c].lon + rng.random_range(-LOCATION_JITTER_DEG..=LOCATION_JITTER_DEG);
        self.counters[c] += 1;
        let code = format!("{}{:04}", COUNTIES[c].code, self.counters[c]);
        let point = GeoPoint::new(round_to(lat, 5), round_to(lon, 5)).expect("UK coordinates");
        self.index.insert(&code, point);
        code
    }
}

fn unique_id<R: Rng>(rng: &mut R, prefix: &str, seen: &mut HashSet<String>) -> String {
    loop {
        let id = format!("{prefix}-{:08X}", rng.random::<u32>());
        if seen.insert(id.clone()) {
            return id;
        }
    }
}

pub fn generate(config: &GenConfig) -> Result<Dataset, GenError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ids = HashSet::new();
    let mut locator = Locator::new();
    let year_start = NaiveDate::from_ymd_opt(config.validity_year, 1, 1).expect("validated");
    let year_end = NaiveDate::from_ymd_opt(config.validity_year, 12, 31).expect("validated");

    let order_kg = quantities_kg(
        &mut rng,
        config.n_orders,
        config.total_demand,
        config.demand_quantity_sigma,
    );
    let mut orders = Vec::with_capacity(config.n_orders);
    for kg in order_kg {
        let price = truncated_normal(&mut rng, config.demand_price_mean, config.demand_price_sd);
        let expiry = offset_date(&mut rng, config.order_expiry_anchor, config.expiry_spread_days);
        orders.push(Order {
            id: unique_id(&mut rng, "OR", &mut ids),
            buyer_id: unique_id(&mut rng, "BY", &mut ids),
            product_id: config.product_id.clone(),
            quantity: kg as f64 / 1000.0,
            min_quantity: kg as f64 / 100_000.0,
            price_per_unit: price,
            max_price_per_unit: round_to(price * rng.random_range(1.10..=1.20), 2),
            expiry_date: expiry,
            fulfill_date: expiry - Days::new(config.fulfil_lead_days),
            delivery_only: false,
            delivery_postcode: locator.next(&mut rng),
            single_offer: false,
        });
    }

    let offer_kg = quantities_kg(
        &mut rng,
        config.n_offers,
        config.total_supply,
        config.supply_quantity_sigma,
    );
    let mut offers = Vec::with_capacity(config.n_offers);
    for kg in offer_kg {
        let mut price = truncated_normal(&mut rng, config.supply_price_mean, config.supply_price_sd);
        if rng.random_bool(config.misaligned_offer_share) {
            let (lo, hi) = config.misaligned_price_factor;
            price = round_to(price * rng.random_range(lo..=hi), 2);
        }
        let expiry = offset_date(&mut rng, config.offer_expiry_anchor, config.expiry_spread_days);
        let produced = config.production_start + Days::new(rng.random_range(0..=config.production_spread_days));
        offers.push(Offer {
            id: unique_id(&mut rng, "OF", &mut ids),
            seller_id: unique_id(&mut rng, "SL", &mut ids),
            product_id: config.product_id.clone(),
            quantity: kg as f64 / 1000.0,
            min_quantity: kg as f64 / 100_000.0,
            price_per_unit: price,
            min_price_per_unit: round_to(price * rng.random_range(0.80..=0.90), 2),
            production_date: produced.min(expiry),
            expiry_date: expiry,
            valid_from: year_start,
            valid_until: year_end,
            collection_only: false,
            collection_postcode: locator.next(&mut rng),
            single_order: false,
        });
    }

    Ok(Dataset {
        offers,
        orders,
        postcodes: locator.index,
    })
}

/// Writes `offers.csv`, `orders.csv` and `postcodes.csv` into `dir`,
/// creating it if needed.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<(), GenError> {
    std::fs::create_dir_all(dir).map_err(|source| GenError::CreateDir {
        path: dir.to_path_buf(),
        source,
    })?;
    io::write_offers(&dir.join("offers.csv"), &data.offers)?;
    io::write_orders(&dir.join("orders.csv"), &data.orders)?;
    io::write_postcodes(&dir.join("postcodes.csv"), &data.postcodes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::first_failure;
    use crate::model::{validate_offer, validate_order, RawOffer, RawOrder, ReasonCode};

    fn default_data() -> Dataset {
        generate(&GenConfig::default()).unwrap()
    }

    #[test]
    fn counts_and_totals() {
        let d = default_data();
        assert_eq!(d.orders.len(), 118);
        assert_eq!(d.offers.len(), 932);
        let demand: f64 = d.orders.iter().map(|o| o.quantity).sum();
        let supply: f64 = d.offers.iter().map(|o| o.quantity).sum();
        assert!((demand - 505_198.0).abs() < 1e-6, "{demand}");
        assert!((supply - 192_768.0).abs() < 1e-6, "{supply}");
        assert!(d.offers.iter().all(|o| o.quantity > 0.0));
    }

    #[test]
    fn minimum_is_one_percent() {
        let d = default_data();
        for o in &d.offers {
            assert!((o.min_quantity - 0.01 * o.quantity).abs() < 1e-9);
        }
        let kg = 200_000u64;
        assert_eq!(kg as f64 / 100_000.0, 2.0);
    }

    #[test]
    fn demand_price_mean_near_target() {
        let d = default_data();
        let mean = d.orders.iter().map(|o| o.price_per_unit).sum::<f64>() / d.orders.len() as f64;
        assert!((mean - 1061.2).abs() <= 15.0, "{mean}");
    }

    #[test]
    fn entity_rules() {
        let d = default_data();
        for o in &d.orders {
            let r = o.max_price_per_unit / o.price_per_unit;
            assert!((1.1 - 1e-4..=1.2 + 1e-4).contains(&r));
            assert_eq!(o.expiry_date - o.fulfill_date, chrono::Duration::days(7));
            let off = (o.expiry_date - date(2025, 10, 20)).num_days();
            assert!((-7..=7).contains(&off));
            assert_eq!(o.product_id, "edible");
            assert!(!o.single_offer && !o.delivery_only);
        }
        for f in &d.offers {
            let r = f.min_price_per_unit / f.price_per_unit;
            assert!((0.8 - 1e-4..=0.9 + 1e-4).contains(&r));
            let off = (f.expiry_date - date(2025, 10, 27)).num_days();
            assert!((-7..=7).contains(&off));
            assert_eq!(f.valid_from, date(2025, 1, 1));
            assert_eq!(f.valid_until, date(2025, 12, 31));
            assert!(!f.single_order && !f.collection_only);
        }
    }

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn every_entity_validates_and_geocodes() {
        let d = default_data();
        for o in &d.offers {
            assert_eq!(&validate_offer(&RawOffer::from(o)).unwrap(), o);
            assert!(d.postcodes.get(&o.collection_postcode).is_some());
        }
        for o in &d.orders {
            assert_eq!(&validate_order(&RawOrder::from(o)).unwrap(), o);
            assert!(d.postcodes.get(&o.delivery_postcode).is_some());
        }
        assert_eq!(d.postcodes.len(), 118 + 932);
    }

    #[test]
    fn locations_stay_near_centroids() {
        let d = default_data();
        let mut kent = 0;
        for (code, p) in d.postcodes.iter() {
            let c = COUNTIES.iter().find(|c| code.starts_with(c.code)).unwrap();
            assert!((p.lat() - c.lat).abs() <= LOCATION_JITTER_DEG + 1e-9);
            assert!((p.lon() - c.lon).abs() <= LOCATION_JITTER_DEG + 1e-9);
            kent += usize::from(c.code == "ME");
        }
        assert!(kent > 200, "{kent}");
    }

    #[test]
    fn price_checks_almost_always_pass() {
        let d = default_data();
        let mut pass = 0usize;
        for f in &d.offers {
            for o in &d.orders {
                pass += usize::from(f.min_price_per_unit <= o.max_price_per_unit);
            }
        }
        assert!(pass as f64 / (d.offers.len() * d.orders.len()) as f64 > 0.95);
    }

    #[test]
    fn mean_expiry_gap_is_about_a_week() {
        let d = default_data();
        let mut sum = 0i64;
        for f in &d.offers {
            for o in &d.orders {
                sum += (f.expiry_date - o.expiry_date).num_days();
            }
        }
        let mean = sum as f64 / (d.offers.len() * d.orders.len()) as f64;
        assert!((mean - 7.0).abs() < 1.0, "{mean}");
        let f = &d.offers[0];
        assert!(d
            .orders
            .iter()
            .any(|o| first_failure(f, o).is_none_or(|(r, _)| r != ReasonCode::Price)));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = default_data();
        let b = default_data();
        assert_eq!(a, b);
        let c = generate(&GenConfig {
            seed: 7,
            ..GenConfig::default()
        })
        .unwrap();
        assert_ne!(a.offers, c.offers);
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        write_dataset(d1.path(), &default_data()).unwrap();
        write_dataset(d2.path(), &default_data()).unwrap();
        for f in ["offers.csv", "orders.csv", "postcodes.csv"] {
            assert_eq!(
                std::fs::read(d1.path().join(f)).unwrap(),
                std::fs::read(d2.path().join(f)).unwrap()
            );
        }
    }

    #[test]
    fn written_dataset_reads_back() {
        let dir = tempfile::tempdir().unwrap();
        let d = default_data();
        write_dataset(dir.path(), &d).unwrap();
        assert_eq!(io::read_offers(&dir.path().join("offers.csv")).unwrap(), d.offers);
        assert_eq!(io::read_orders(&dir.path().join("orders.csv")).unwrap(), d.orders);
        assert_eq!(
            io::read_postcodes(&dir.path().join("postcodes.csv")).unwrap(),
            d.postcodes
        );
    }

    #[test]
    fn misaligned_offers_price_out_of_every_order() {
        let d = default_data();
        let top_max = d.orders.iter().map(|o| o.max_price_per_unit).fold(0.0, f64::max);
        let high: Vec<_> = d.offers.iter().filter(|f| f.price_per_unit > 3.0 * 1062.84).collect();
        let share = high.len() as f64 / d.offers.len() as f64;
        assert!((0.02..0.06).contains(&share), "{share}");
        assert!(high.iter().all(|f| f.min_price_per_unit > top_max));

        let none = generate(&GenConfig {
            misaligned_offer_share: 0.0,
            ..GenConfig::default()
        })
        .unwrap();
        assert!(none.offers.iter().all(|f| f.price_per_unit < 2.0 * 1062.84));
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate(&GenConfig {
            n_orders: 0,
            ..GenConfig::default()
        })
        .is_err());
        assert!(generate(&GenConfig {
            supply_price_sd: -1.0,
            ..GenConfig::default()
        })
        .is_err());
    }
}
