// Independent replay of an allocation: rebuilds the residual market each
// iteration saw and re-applies the pair checks to every flow it produced.

use std::collections::HashMap;

use chrono::NaiveDate;
use circalloc::engine::AllocationResult;
use circalloc::feasibility::first_failure;
use circalloc::{Offer, Order};

const TOL: f64 = 1e-6;
const DUST: f64 = 1e-9;

/// Descriptions of every violated check; empty when the allocation is clean.
pub fn recheck_flows(
    offers: &[Offer],
    orders: &[Order],
    result: &AllocationResult,
    reference_date: NaiveDate,
) -> Vec<String> {
    let mut offer_left: HashMap<&str, Offer> = offers.iter().map(|o| (o.id.as_str(), o.clone())).collect();
    let mut order_left: HashMap<&str, Order> = orders.iter().map(|o| (o.id.as_str(), o.clone())).collect();
    let mut bad = Vec::new();

    for (k, record) in result.iterations.iter().enumerate() {
        if record.index != k as u32 + 1 {
            bad.push(format!("iteration {} recorded at position {k}", record.index));
        }
        if k > 0 {
            // only unexpired supply circulates
            offer_left.retain(|_, o| o.expiry_date > reference_date);
        }
        let mut offer_used: HashMap<&str, f64> = HashMap::new();
        let mut order_used: HashMap<&str, f64> = HashMap::new();
        for f in &record.flows {
            let (Some(offer), Some(order)) = (offer_left.get(f.offer_id.as_str()), order_left.get(f.order_id.as_str()))
            else {
                bad.push(format!(
                    "iteration {}: {} -> {} uses an entity not in the residual market",
                    record.index, f.offer_id, f.order_id
                ));
                continue;
            };
            if let Some((reason, detail)) = first_failure(offer, order) {
                bad.push(format!(
                    "iteration {}: {} -> {} fails {reason:?}: {detail}",
                    record.index, f.offer_id, f.order_id
                ));
            }
            let lower = offer.min_quantity.max(order.min_quantity);
            let upper = offer.quantity.min(order.quantity);
            if f.quantity < lower - TOL || f.quantity > upper + TOL {
                bad.push(format!(
                    "iteration {}: {} -> {} carries {} outside [{lower}, {upper}]",
                    record.index, f.offer_id, f.order_id, f.quantity
                ));
            }
            *offer_used.entry(offer_id(offers, &f.offer_id)).or_default() += f.quantity;
            *order_used.entry(order_id(orders, &f.order_id)).or_default() += f.quantity;
        }
        for (id, used) in offer_used {
            let o = offer_left.get_mut(id).expect("checked above");
            if used > o.quantity + TOL {
                bad.push(format!(
                    "iteration {}: offer {id} overdrawn by {}",
                    record.index,
                    used - o.quantity
                ));
            }
            o.quantity = (o.quantity - used).max(0.0);
            o.min_quantity = o.min_quantity.min(o.quantity);
        }
        for (id, used) in order_used {
            let o = order_left.get_mut(id).expect("checked above");
            if used > o.quantity + TOL {
                bad.push(format!(
                    "iteration {}: order {id} overdrawn by {}",
                    record.index,
                    used - o.quantity
                ));
            }
            o.quantity = (o.quantity - used).max(0.0);
            o.min_quantity = o.min_quantity.min(o.quantity);
        }
        offer_left.retain(|_, o| o.quantity > DUST);
        order_left.retain(|_, o| o.quantity > DUST);
    }
    bad
}

fn offer_id<'a>(offers: &'a [Offer], id: &str) -> &'a str {
    &offers.iter().find(|o| o.id == id).expect("known offer").id
}

fn order_id<'a>(orders: &'a [Order], id: &str) -> &'a str {
    &orders.iter().find(|o| o.id == id).expect("known order").id
}
