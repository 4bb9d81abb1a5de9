//! Iterative allocation: solve, subtract, circulate, repeat.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasibility::{build_arcs, first_failure, MatchContext, RejectionRecord};
use crate::geo::{GeoError, PostcodeIndex};
use crate::model::{subtract_flows, CriterionScores, Flow, ModelError, Offer, Order, ReasonCode, Weights};
use crate::scoring::{criterion_scores, score_arcs};
use crate::solver::{self, SolveStatus, SolverConfig, SolverError};

pub const EXPIRED_LABEL: &str = "downgrade: processing-grade";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub max_iterations: u32,
    pub reference_date: NaiveDate,
    pub solver: SolverConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_iterations: 5,
            reference_date: NaiveDate::from_ymd_opt(2025, 10, 13).expect("valid date"),
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("max_iterations must be at least 1")]
    NoIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub index: u32,
    pub flows: Vec<Flow>,
    pub allocated_tonnes: f64,
    pub residual_offers: usize,
    pub residual_orders: usize,
    /// Set on the last iteration of a run.
    pub terminated: bool,
    pub status: SolveStatus,
    pub objective: f64,
    pub node_count: usize,
    pub lp_iterations: usize,
    pub gap: f64,
    pub feasible_arcs: usize,
    pub pruned_arcs: usize,
    pub screened_arcs: usize,
    pub rejections_by_reason: BTreeMap<ReasonCode, usize>,
    pub expired_offers: usize,
}

/// One iteration's record together with the residual market it leaves.
#[derive(Debug, Clone)]
pub struct IterationOutcome {
    pub record: IterationRecord,
    pub offers: Vec<Offer>,
    pub orders: Vec<Order>,
    pub rejections: Vec<RejectionRecord>,
}

/// Residual supply removed from circulation because it expired.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpiredOffer {
    pub offer_id: String,
    pub quantity: f64,
    pub expiry_date: NaiveDate,
    /// Iteration after which the offer was flagged.
    pub iteration: u32,
    pub reason: ReasonCode,
    pub label: String,
}

/// Blocking cause attributed to a leftover offer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DominantReason {
    Rejected(ReasonCode),
    /// No orders remain to trade with.
    NoneRemaining,
    /// Some remaining order passes every check, but the solver did not use it.
    NotSelected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeftoverDiagnostic {
    pub offer_id: String,
    pub remaining: f64,
    /// Mean criterion scores against every remaining order, or `None` if
    /// there are none.
    pub mean_scores: Option<CriterionScores>,
    pub dominant_reason: DominantReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrderFulfilment {
    pub fully_met: Vec<String>,
    pub partially_met: Vec<String>,
    pub unmet: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub iterations: Vec<IterationRecord>,
    pub flows: Vec<Flow>,
    /// Non-expired residual supply at termination.
    pub leftover_offers: Vec<Offer>,
    pub expired: Vec<ExpiredOffer>,
    pub residual_orders: Vec<Order>,
    pub orders: OrderFulfilment,
    /// Pair rejections of the first iteration, i.e. of the input market.
    pub rejections: Vec<RejectionRecord>,
    pub leftover_diagnostics: Vec<LeftoverDiagnostic>,
    pub total_supply: f64,
    pub total_demand: f64,
}

impl AllocationResult {
    pub fn allocated_tonnes(&self) -> f64 {
        self.iterations.iter().fold(0.0, |s, r| s + r.allocated_tonnes)
    }

    /// Tonnage allocated from the second iteration on.
    pub fn circulated_tonnes(&self) -> f64 {
        self.iterations
            .iter()
            .filter(|r| r.index >= 2)
            .fold(0.0, |s, r| s + r.allocated_tonnes)
    }

    pub fn leftover_tonnes(&self) -> f64 {
        self.leftover_offers.iter().fold(0.0, |s, o| s + o.quantity)
    }

    pub fn expired_tonnes(&self) -> f64 {
        self.expired.iter().fold(0.0, |s, e| s + e.quantity)
    }

    /// True when every iteration ended OPTIMAL or EMPTY.
    pub fn all_optimal(&self) -> bool {
        self.iterations
            .iter()
            .all(|r| matches!(r.status, SolveStatus::Optimal | SolveStatus::Empty))
    }
}

/// Midpoint of the two list prices, clamped into the overlap of the
/// acceptable ranges.
pub fn transaction_price(offer: &Offer, order: &Order) -> f64 {
    let mid = 0.5 * (offer.price_per_unit + order.price_per_unit);
    mid.max(offer.min_price_per_unit).min(order.max_price_per_unit)
}

pub fn run_iteration(
    index: u32,
    offers: &[Offer],
    orders: &[Order],
    postcodes: &PostcodeIndex,
    weights: &Weights,
    config: &EngineConfig,
) -> Result<IterationOutcome, EngineError> {
    let ctx = MatchContext {
        index: postcodes,
        reference_date: config.reference_date,
    };
    let set = build_arcs(offers, orders, &ctx)?;
    let scored = score_arcs(&set.arcs, offers, orders, weights);
    let report = solver::solve(offers, orders, &scored, &config.solver)?;

    let flows: Vec<Flow> = report
        .allocations
        .iter()
        .map(|a| {
            let sa = &scored[a.arc];
            let offer = &offers[sa.arc.offer_index];
            let order = &orders[sa.arc.order_index];
            Flow {
                iteration: index,
                offer_id: offer.id.clone(),
                order_id: order.id.clone(),
                quantity: a.quantity,
                transaction_price: transaction_price(offer, order),
                distance_km: sa.arc.distance_km,
                scores: sa.scores,
            }
        })
        .collect();
    let (offers_left, orders_left) = subtract_flows(offers, orders, &flows)?;

    let mut rejections_by_reason = BTreeMap::new();
    for r in &set.rejections {
        *rejections_by_reason.entry(r.reason).or_insert(0) += 1;
    }
    if !report.pruned.is_empty() {
        rejections_by_reason.insert(ReasonCode::Pruned, report.pruned.len());
    }
    if !report.screened.is_empty() {
        rejections_by_reason.insert(ReasonCode::Screened, report.screened.len());
    }
    log::info!(
        "iteration {index}: {} offers x {} orders, {} arcs, {} flows, status {:?}",
        offers.len(),
        orders.len(),
        scored.len(),
        flows.len(),
        report.status
    );

    let record = IterationRecord {
        index,
        allocated_tonnes: flows.iter().fold(0.0, |s, f| s + f.quantity),
        terminated: flows.is_empty(),
        flows,
        residual_offers: offers_left.len(),
        residual_orders: orders_left.len(),
        status: report.status,
        objective: report.objective_value,
        node_count: report.node_count,
        lp_iterations: report.lp_iterations,
        gap: report.gap,
        feasible_arcs: scored.len(),
        pruned_arcs: report.pruned_arcs(),
        screened_arcs: report.screened_arcs(),
        rejections_by_reason,
        expired_offers: 0,
    };
    Ok(IterationOutcome {
        record,
        offers: offers_left,
        orders: orders_left,
        rejections: set.rejections,
    })
}

/// Splits residual offers into those still sellable after `reference_date`
/// and those flagged as expired.
pub fn circulate(leftover: Vec<Offer>, reference_date: NaiveDate, iteration: u32) -> (Vec<Offer>, Vec<ExpiredOffer>) {
    let (carried, expired): (Vec<Offer>, Vec<Offer>) =
        leftover.into_iter().partition(|o| o.expiry_date > reference_date);
    let expired = expired
        .into_iter()
        .map(|o| ExpiredOffer {
            offer_id: o.id,
            quantity: o.quantity,
            expiry_date: o.expiry_date,
            iteration,
            reason: ReasonCode::ExpiredSupply,
            label: EXPIRED_LABEL.to_string(),
        })
        .collect();
    (carried, expired)
}

/// Mean criterion scores of each leftover offer against every remaining
/// order, with price feasibility ignored, and its most common blocking reason.
pub fn leftover_diagnostics(
    leftover: &[Offer],
    orders: &[Order],
    postcodes: &PostcodeIndex,
    weights: &Weights,
) -> Result<Vec<LeftoverDiagnostic>, GeoError> {
    let order_points = orders
        .iter()
        .map(|o| postcodes.resolve(&o.delivery_postcode))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(leftover.len());
    for offer in leftover {
        if orders.is_empty() {
            out.push(LeftoverDiagnostic {
                offer_id: offer.id.clone(),
                remaining: offer.quantity,
                mean_scores: None,
                dominant_reason: DominantReason::NoneRemaining,
            });
            continue;
        }
        let from = postcodes.resolve(&offer.collection_postcode)?;
        let mut sum = [0.0; 5];
        let mut reasons: BTreeMap<ReasonCode, usize> = BTreeMap::new();
        for (order, &to) in orders.iter().zip(&order_points) {
            let s = criterion_scores(offer, order, crate::geo::haversine_km(from, to), weights);
            for (acc, v) in sum
                .iter_mut()
                .zip([s.price, s.quantity, s.freshness, s.distance, s.aggregate])
            {
                *acc += v;
            }
            if let Some((reason, _)) = first_failure(offer, order) {
                *reasons.entry(reason).or_insert(0) += 1;
            }
        }
        let n = orders.len() as f64;
        // ties go to the earlier check
        let dominant = reasons
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&r, _)| r);
        out.push(LeftoverDiagnostic {
            offer_id: offer.id.clone(),
            remaining: offer.quantity,
            mean_scores: Some(CriterionScores {
                price: sum[0] / n,
                quantity: sum[1] / n,
                freshness: sum[2] / n,
                distance: sum[3] / n,
                aggregate: sum[4] / n,
            }),
            dominant_reason: dominant.map_or(DominantReason::NotSelected, DominantReason::Rejected),
        });
    }
    Ok(out)
}

fn classify_orders(orders: &[Order], flows: &[Flow]) -> OrderFulfilment {
    let mut allocated: BTreeMap<&str, f64> = BTreeMap::new();
    for f in flows {
        *allocated.entry(f.order_id.as_str()).or_default() += f.quantity;
    }
    let mut out = OrderFulfilment::default();
    for o in orders {
        let got = allocated.get(o.id.as_str()).copied().unwrap_or(0.0);
        if got <= 0.0 {
            out.unmet.push(o.id.clone());
        } else if (o.quantity - got).abs() <= 1e-6 {
            out.fully_met.push(o.id.clone());
        } else {
            out.partially_met.push(o.id.clone());
        }
    }
    out
}

/// Runs iterations on the shrinking residual market until one moves nothing
/// or `max_iterations` is reached.
pub fn run_to_termination(
    offers: &[Offer],
    orders: &[Order],
    postcodes: &PostcodeIndex,
    weights: &Weights,
    config: &EngineConfig,
) -> Result<AllocationResult, EngineError> {
    if config.max_iterations == 0 {
        return Err(EngineError::NoIterations);
    }
    let mut offers_r = offers.to_vec();
    let mut orders_r = orders.to_vec();
    let mut iterations = Vec::new();
    let mut expired = Vec::new();
    let mut rejections = Vec::new();

    for index in 1..=config.max_iterations {
        let mut out = run_iteration(index, &offers_r, &orders_r, postcodes, weights, config)?;
        if index == 1 {
            rejections = std::mem::take(&mut out.rejections);
        }
        let (carried, flagged) = circulate(out.offers, config.reference_date, index);
        out.record.expired_offers = flagged.len();
        if index == config.max_iterations {
            out.record.terminated = true;
        }
        let done = out.record.terminated;
        expired.extend(flagged);
        iterations.push(out.record);
        offers_r = carried;
        orders_r = out.orders;
        if done {
            break;
        }
    }

    let flows: Vec<Flow> = iterations.iter().flat_map(|r| r.flows.iter().cloned()).collect();
    let leftover_diagnostics = leftover_diagnostics(&offers_r, &orders_r, postcodes, weights)?;
    Ok(AllocationResult {
        orders: classify_orders(orders, &flows),
        flows,
        iterations,
        leftover_offers: offers_r,
        expired,
        residual_orders: orders_r,
        rejections,
        leftover_diagnostics,
        total_supply: offers.iter().fold(0.0, |s, o| s + o.quantity),
        total_demand: orders.iter().fold(0.0, |s, o| s + o.quantity),
    })
}
