//! Aggregate and per-participant outcome metrics, and the seven-strategy suite.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{run_to_termination, AllocationResult, EngineConfig, EngineError};
use crate::geo::PostcodeIndex;
use crate::model::{Flow, Offer, Order, Weights};
use crate::scoring::expiry_gap_days;

/// Tolerance for calling a participant fully met.
pub const FULFIL_TOL: f64 = 1e-6;

/// Mean, sample standard deviation and adjusted Fisher-Pearson skewness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// `None` below two observations.
    pub sd: Option<f64>,
    /// `None` below three observations or for a constant sample.
    pub skewness: Option<f64>,
}

impl Summary {
    /// `None` for an empty sample.
    pub fn of(xs: &[f64]) -> Option<Summary> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m3 = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
        let sd = (xs.len() >= 2).then(|| (m2 * n / (n - 1.0)).sqrt());
        let skewness = (xs.len() >= 3 && m2 > 1e-12 * mean.abs().max(1.0).powi(2)).then(|| {
            let g1 = m3 / m2.powf(1.5);
            g1 * (n * (n - 1.0)).sqrt() / (n - 2.0)
        });
        Some(Summary {
            n: xs.len(),
            mean,
            sd,
            skewness,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub orders: usize,
    pub fully_met_orders: usize,
    pub partially_met_orders: usize,
    pub unmet_orders: usize,
    pub offers: usize,
    pub fully_met_offers: usize,
    pub partially_met_offers: usize,
    pub unmet_offers: usize,
    pub total_demand: f64,
    pub total_supply: f64,
    pub allocation_first_iteration: f64,
    pub utilisation_first_iteration_pct: f64,
    pub allocation_at_termination: f64,
    pub utilisation_pct: f64,
    /// Allocated from the second iteration on, as a share of total supply.
    pub circulated_pct: f64,
    pub leftover_pct: f64,
    pub expired_tonnes: f64,
    pub iterations: usize,
}

/// Per-participant distributions for one side of the market.
///
/// Counterparts and allocation ratio include unmatched participants (as 0);
/// unit price, distance and expiry gap are undefined without a flow and
/// cover matched participants only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideMetrics {
    pub counterparts: Option<Summary>,
    pub allocation_ratio: Option<Summary>,
    pub unit_price: Option<Summary>,
    pub distance_km: Option<Summary>,
    pub expiry_gap_days: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSuite {
    pub aggregate: AggregateMetrics,
    pub orders: SideMetrics,
    pub offers: SideMetrics,
}

#[derive(Default)]
struct Participant {
    allocated: f64,
    counterparts: BTreeSet<String>,
    value: f64,
    distance: f64,
    gap_weighted: f64,
}

impl Participant {
    fn add(&mut self, f: &Flow, counterpart: &str, gap: i64) {
        self.allocated += f.quantity;
        self.counterparts.insert(counterpart.to_string());
        self.value += f.quantity * f.transaction_price;
        self.distance += f.distance_km;
        self.gap_weighted += f.quantity * gap as f64;
    }
}

#[derive(Default)]
struct Classes {
    fully: usize,
    partially: usize,
    unmet: usize,
}

fn side_metrics<'a>(
    participants: impl Iterator<Item = (f64, Option<&'a Participant>)>,
    classes: &mut Classes,
) -> SideMetrics {
    let mut counterparts = Vec::new();
    let mut ratio = Vec::new();
    let mut price = Vec::new();
    let mut distance = Vec::new();
    let mut gap = Vec::new();
    for (quantity, p) in participants {
        let allocated = p.map_or(0.0, |p| p.allocated);
        if allocated <= 0.0 {
            classes.unmet += 1;
        } else if (quantity - allocated).abs() <= FULFIL_TOL {
            classes.fully += 1;
        } else {
            classes.partially += 1;
        }
        counterparts.push(p.map_or(0, |p| p.counterparts.len()) as f64);
        ratio.push(if quantity > 0.0 { allocated / quantity } else { 0.0 });
        if let Some(p) = p.filter(|p| p.allocated > 0.0) {
            price.push(p.value / p.allocated);
            distance.push(p.distance);
            gap.push(p.gap_weighted / p.allocated);
        }
    }
    SideMetrics {
        counterparts: Summary::of(&counterparts),
        allocation_ratio: Summary::of(&ratio),
        unit_price: Summary::of(&price),
        distance_km: Summary::of(&distance),
        expiry_gap_days: Summary::of(&gap),
    }
}

/// Computes the metric suite of `result` against the original market.
pub fn compute_metrics(result: &AllocationResult, offers: &[Offer], orders: &[Order]) -> MetricSuite {
    let offer_by_id: BTreeMap<&str, &Offer> = offers.iter().map(|o| (o.id.as_str(), o)).collect();
    let order_by_id: BTreeMap<&str, &Order> = orders.iter().map(|o| (o.id.as_str(), o)).collect();
    let mut by_offer: BTreeMap<&str, Participant> = BTreeMap::new();
    let mut by_order: BTreeMap<&str, Participant> = BTreeMap::new();
    for f in &result.flows {
        // the gap is fixed by the original expiry dates, whatever the iteration
        let gap = match (
            offer_by_id.get(f.offer_id.as_str()),
            order_by_id.get(f.order_id.as_str()),
        ) {
            (Some(of), Some(or)) => expiry_gap_days(of, or),
            _ => 0,
        };
        by_offer.entry(&f.offer_id).or_default().add(f, &f.order_id, gap);
        by_order.entry(&f.order_id).or_default().add(f, &f.offer_id, gap);
    }

    let mut order_classes = Classes::default();
    let order_side = side_metrics(
        orders.iter().map(|o| (o.quantity, by_order.get(o.id.as_str()))),
        &mut order_classes,
    );
    let mut offer_classes = Classes::default();
    let offer_side = side_metrics(
        offers.iter().map(|o| (o.quantity, by_offer.get(o.id.as_str()))),
        &mut offer_classes,
    );

    let total_supply = offers.iter().fold(0.0, |s, o| s + o.quantity);
    let total_demand = orders.iter().fold(0.0, |s, o| s + o.quantity);
    let first = result.iterations.first().map_or(0.0, |r| r.allocated_tonnes);
    let allocated = result.allocated_tonnes();
    let pct = |x: f64| {
        if total_supply > 0.0 {
            100.0 * x / total_supply
        } else {
            0.0
        }
    };
    let utilisation = pct(allocated);

    MetricSuite {
        aggregate: AggregateMetrics {
            orders: orders.len(),
            fully_met_orders: order_classes.fully,
            partially_met_orders: order_classes.partially,
            unmet_orders: order_classes.unmet,
            offers: offers.len(),
            fully_met_offers: offer_classes.fully,
            partially_met_offers: offer_classes.partially,
            unmet_offers: offer_classes.unmet,
            total_demand,
            total_supply,
            allocation_first_iteration: first,
            utilisation_first_iteration_pct: pct(first),
            allocation_at_termination: allocated,
            utilisation_pct: utilisation,
            circulated_pct: pct(result.circulated_tonnes()),
            leftover_pct: 100.0 - utilisation,
            expired_tonnes: result.expired_tonnes(),
            iterations: result.iterations.len(),
        },
        orders: order_side,
        offers: offer_side,
    }
}

/// The seven evaluated weight settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "Eq")]
    EqualWeights,
    #[serde(rename = "Price")]
    PriceFirst,
    #[serde(rename = "Qty")]
    QuantityFirst,
    #[serde(rename = "Expiry")]
    ExpiryFirst,
    #[serde(rename = "Dist")]
    DistanceFirst,
    #[serde(rename = "PriceX")]
    PriceExtreme,
    #[serde(rename = "DistX")]
    DistanceExtreme,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::EqualWeights,
        Strategy::PriceFirst,
        Strategy::QuantityFirst,
        Strategy::ExpiryFirst,
        Strategy::DistanceFirst,
        Strategy::PriceExtreme,
        Strategy::DistanceExtreme,
    ];

    /// Short column label.
    pub fn label(self) -> &'static str {
        match self {
            Strategy::EqualWeights => "Eq",
            Strategy::PriceFirst => "Price",
            Strategy::QuantityFirst => "Qty",
            Strategy::ExpiryFirst => "Expiry",
            Strategy::DistanceFirst => "Dist",
            Strategy::PriceExtreme => "PriceX",
            Strategy::DistanceExtreme => "DistX",
        }
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            Strategy::EqualWeights => "equal-weights",
            Strategy::PriceFirst => "price-first",
            Strategy::QuantityFirst => "quantity-first",
            Strategy::ExpiryFirst => "expiry-first",
            Strategy::DistanceFirst => "distance-first",
            Strategy::PriceExtreme => "price-extreme",
            Strategy::DistanceExtreme => "distance-extreme",
        }
    }

    /// (price, quantity, expiry, distance)
    pub fn weights(self) -> Weights {
        let (p, q, e, d) = match self {
            Strategy::EqualWeights => (0.25, 0.25, 0.25, 0.25),
            Strategy::PriceFirst => (0.55, 0.15, 0.15, 0.15),
            Strategy::QuantityFirst => (0.15, 0.55, 0.15, 0.15),
            Strategy::ExpiryFirst => (0.15, 0.15, 0.55, 0.15),
            Strategy::DistanceFirst => (0.15, 0.15, 0.15, 0.55),
            Strategy::PriceExtreme => (0.80, 0.05, 0.05, 0.10),
            Strategy::DistanceExtreme => (0.10, 0.05, 0.05, 0.80),
        };
        Weights::new(p, q, e, d).expect("strategy weights sum to 1")
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown strategy `{0}`")]
pub struct UnknownStrategy(pub String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;

    /// Accepts the CLI name or the short label, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.cli_name().eq_ignore_ascii_case(s) || st.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownStrategy(s.to_string()))
    }
}

/// One weight setting run to termination, with its metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRun {
    pub label: String,
    /// `None` for user-supplied weights.
    pub strategy: Option<Strategy>,
    pub weights: Weights,
    pub result: AllocationResult,
    pub metrics: MetricSuite,
}

impl StrategyRun {
    pub fn execute(
        label: &str,
        strategy: Option<Strategy>,
        weights: Weights,
        offers: &[Offer],
        orders: &[Order],
        postcodes: &PostcodeIndex,
        config: &EngineConfig,
    ) -> Result<StrategyRun, EngineError> {
        let result = run_to_termination(offers, orders, postcodes, &weights, config)?;
        let metrics = compute_metrics(&result, offers, orders);
        Ok(StrategyRun {
            label: label.to_string(),
            strategy,
            weights,
            result,
            metrics,
        })
    }

    pub fn of_strategy(
        strategy: Strategy,
        offers: &[Offer],
        orders: &[Order],
        postcodes: &PostcodeIndex,
        config: &EngineConfig,
    ) -> Result<StrategyRun, EngineError> {
        Self::execute(
            strategy.label(),
            Some(strategy),
            strategy.weights(),
            offers,
            orders,
            postcodes,
            config,
        )
    }
}

/// Runs every strategy from the same initial market, one thread per strategy.
/// Results come back in [`Strategy::ALL`] order.
pub fn run_strategy_suite(
    offers: &[Offer],
    orders: &[Order],
    postcodes: &PostcodeIndex,
    config: &EngineConfig,
) -> Result<Vec<StrategyRun>, EngineError> {
    std::thread::scope(|s| {
        let handles: Vec<_> = Strategy::ALL
            .into_iter()
            .map(|strategy| s.spawn(move || StrategyRun::of_strategy(strategy, offers, orders, postcodes, config)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("strategy thread panicked"))
            .collect()
    })
}
