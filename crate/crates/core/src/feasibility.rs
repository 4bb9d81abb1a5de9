//! Feasible arc construction: which offer/order pairs may trade at all.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::geo::{haversine_km, GeoError, GeoPoint, PostcodeIndex};
use crate::model::{Offer, Order, ReasonCode, QTY_TOL};

/// A pair that passed every feasibility check.
///
/// `offer_index` / `order_index` point into the slices the arc was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleArc {
    pub offer_id: String,
    pub order_id: String,
    pub offer_index: usize,
    pub order_index: usize,
    /// min of the two remaining quantities.
    pub upper_bound: f64,
    /// max of the two minimum trade quantities.
    pub lower_bound: f64,
    pub distance_km: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRecord {
    pub offer_id: String,
    pub order_id: String,
    pub reason: ReasonCode,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchOutcome {
    Feasible(FeasibleArc),
    Rejected(RejectionRecord),
}

impl MatchOutcome {
    pub fn is_feasible(&self) -> bool {
        matches!(self, MatchOutcome::Feasible(_))
    }
}

/// Scenario inputs shared by every pair check.
///
/// `reference_date` is the scenario date. None of the pair checks depend on
/// it: an order whose fulfilment date already passed is still matched.
#[derive(Debug, Clone, Copy)]
pub struct MatchContext<'a> {
    pub index: &'a PostcodeIndex,
    pub reference_date: NaiveDate,
}

/// First failing check among (product, time window, expiry, logistics,
/// quantity, price), or `None` if the pair may trade.
pub fn first_failure(offer: &Offer, order: &Order) -> Option<(ReasonCode, String)> {
    if offer.product_id != order.product_id {
        return Some((
            ReasonCode::ProductMismatch,
            format!(
                "offer product {} vs order product {}",
                offer.product_id, order.product_id
            ),
        ));
    }
    if order.fulfill_date < offer.valid_from || order.fulfill_date > offer.valid_until {
        return Some((
            ReasonCode::TimeWindow,
            format!(
                "fulfil date {} outside validity {}..{}",
                order.fulfill_date, offer.valid_from, offer.valid_until
            ),
        ));
    }
    if offer.expiry_date <= order.expiry_date {
        return Some((
            ReasonCode::Expiry,
            format!(
                "offer expires {} not after order expiry {}",
                offer.expiry_date, order.expiry_date
            ),
        ));
    }
    if offer.collection_only && order.delivery_only {
        return Some((
            ReasonCode::Logistics,
            "collection-only offer vs delivery-only order".to_string(),
        ));
    }
    let upper = offer.quantity.min(order.quantity);
    let lower = offer.min_quantity.max(order.min_quantity);
    if upper <= QTY_TOL || upper + QTY_TOL < lower {
        return Some((
            ReasonCode::Quantity,
            format!("tradable {upper} t below minimum trade {lower} t"),
        ));
    }
    if offer.min_price_per_unit > order.max_price_per_unit + QTY_TOL {
        return Some((
            ReasonCode::Price,
            format!(
                "offer floor {} above order ceiling {}",
                offer.min_price_per_unit, order.max_price_per_unit
            ),
        ));
    }
    None
}

fn outcome(
    offer: &Offer,
    order: &Order,
    offer_index: usize,
    order_index: usize,
    from: GeoPoint,
    to: GeoPoint,
) -> MatchOutcome {
    match first_failure(offer, order) {
        Some((reason, detail)) => MatchOutcome::Rejected(RejectionRecord {
            offer_id: offer.id.clone(),
            order_id: order.id.clone(),
            reason,
            detail,
        }),
        None => {
            let upper = offer.quantity.min(order.quantity);
            // clamp the tolerance slack so lower <= upper holds exactly
            let lower = offer.min_quantity.max(order.min_quantity).min(upper);
            MatchOutcome::Feasible(FeasibleArc {
                offer_id: offer.id.clone(),
                order_id: order.id.clone(),
                offer_index,
                order_index,
                upper_bound: upper,
                lower_bound: lower,
                distance_km: haversine_km(from, to),
            })
        }
    }
}

/// Classifies one pair. Indices on the emitted arc are 0.
pub fn match_pair(offer: &Offer, order: &Order, ctx: &MatchContext<'_>) -> Result<MatchOutcome, GeoError> {
    let from = ctx.index.resolve(&offer.collection_postcode)?;
    let to = ctx.index.resolve(&order.delivery_postcode)?;
    Ok(outcome(offer, order, 0, 0, from, to))
}

/// Feasible arcs plus a rejection record for every other pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ArcSet {
    pub arcs: Vec<FeasibleArc>,
    pub rejections: Vec<RejectionRecord>,
}

/// Classifies every offer/order pair, ordered by offer id then order id.
///
/// All postcodes are resolved before any pair is examined, so an unknown
/// code fails the whole build even if its pairs would have been rejected.
pub fn build_arcs(offers: &[Offer], orders: &[Order], ctx: &MatchContext<'_>) -> Result<ArcSet, GeoError> {
    let offer_points = offers
        .iter()
        .map(|o| ctx.index.resolve(&o.collection_postcode))
        .collect::<Result<Vec<_>, _>>()?;
    let order_points = orders
        .iter()
        .map(|o| ctx.index.resolve(&o.delivery_postcode))
        .collect::<Result<Vec<_>, _>>()?;

    let mut offer_order: Vec<usize> = (0..offers.len()).collect();
    offer_order.sort_by(|&a, &b| offers[a].id.cmp(&offers[b].id));
    let mut order_order: Vec<usize> = (0..orders.len()).collect();
    order_order.sort_by(|&a, &b| orders[a].id.cmp(&orders[b].id));

    let mut set = ArcSet::default();
    for &fi in &offer_order {
        for &oi in &order_order {
            match outcome(&offers[fi], &orders[oi], fi, oi, offer_points[fi], order_points[oi]) {
                MatchOutcome::Feasible(arc) => set.arcs.push(arc),
                MatchOutcome::Rejected(rec) => set.rejections.push(rec),
            }
        }
    }
    Ok(set)
}
