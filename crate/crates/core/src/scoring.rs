//! Per-arc criterion scores on a 0..100 scale and their weighted aggregate.

use serde::{Deserialize, Serialize};

use crate::feasibility::FeasibleArc;
use crate::model::{CriterionScores, Offer, Order, Weights};

/// Distance at which the decay score reaches 1.
pub const DISTANCE_SCALE_KM: f64 = 1400.0;
/// Expiry gap at which the freshness score reaches 0.
pub const FRESHNESS_HORIZON_DAYS: f64 = 365.0;

/// `100 * (1 - |a - b| / max(a, b))`, with 100 when both are zero.
fn similarity(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi <= 0.0 {
        return 100.0;
    }
    (100.0 * (1.0 - (a - b).abs() / hi)).clamp(0.0, 100.0)
}

pub fn score_price(offer_price: f64, order_price: f64) -> f64 {
    similarity(offer_price, order_price)
}

pub fn score_quantity(offer_qty: f64, order_qty: f64) -> f64 {
    similarity(offer_qty, order_qty)
}

/// Linear in the expiry gap over one year, clamped to [0, 100].
pub fn score_freshness(days_gap: i64) -> f64 {
    (100.0 * (1.0 - days_gap as f64 / FRESHNESS_HORIZON_DAYS)).clamp(0.0, 100.0)
}

pub fn score_distance(distance_km: f64) -> f64 {
    100.0 * (-(100f64.ln()) / DISTANCE_SCALE_KM * distance_km).exp()
}

pub fn aggregate(price: f64, quantity: f64, freshness: f64, distance: f64, w: &Weights) -> f64 {
    w.price * price + w.quantity * quantity + w.expiry * freshness + w.distance * distance
}

/// Whole days from the order's expiry to the offer's expiry.
pub fn expiry_gap_days(offer: &Offer, order: &Order) -> i64 {
    (offer.expiry_date - order.expiry_date).num_days()
}

pub fn criterion_scores(offer: &Offer, order: &Order, distance_km: f64, w: &Weights) -> CriterionScores {
    let price = score_price(offer.price_per_unit, order.price_per_unit);
    let quantity = score_quantity(offer.quantity, order.quantity);
    let freshness = score_freshness(expiry_gap_days(offer, order));
    let distance = score_distance(distance_km);
    CriterionScores {
        price,
        quantity,
        freshness,
        distance,
        aggregate: aggregate(price, quantity, freshness, distance, w),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredArc {
    pub arc: FeasibleArc,
    pub scores: CriterionScores,
}

impl ScoredArc {
    pub fn aggregate(&self) -> f64 {
        self.scores.aggregate
    }
}

/// Scores each arc against the offers/orders its indices point into.
pub fn score_arcs(arcs: &[FeasibleArc], offers: &[Offer], orders: &[Order], w: &Weights) -> Vec<ScoredArc> {
    arcs.iter()
        .map(|arc| ScoredArc {
            scores: criterion_scores(&offers[arc.offer_index], &orders[arc.order_index], arc.distance_km, w),
            arc: arc.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn price_examples() {
        assert_eq!(score_price(1000.0, 1000.0), 100.0);
        assert!((score_price(80.0, 100.0) - 80.0).abs() < 1e-12);
        assert_eq!(score_price(0.0, 100.0), 0.0);
        assert_eq!(score_price(0.0, 0.0), 100.0);
    }

    #[test]
    fn quantity_examples() {
        assert_eq!(score_quantity(50.0, 50.0), 100.0);
        assert!((score_quantity(200.0, 4000.0) - 5.0).abs() < 1e-12);
        assert!((score_quantity(300.0, 400.0) - 75.0).abs() < 1e-12);
    }

    #[test]
    fn freshness_examples() {
        assert_eq!(score_freshness(365), 0.0);
        assert!((score_freshness(7) - 100.0 * (1.0 - 7.0 / 365.0)).abs() < 1e-12);
        assert!((score_freshness(7) - 98.0822).abs() < 1e-4);
        assert!((score_freshness(1) - 99.7260).abs() < 1e-4);
        assert_eq!(score_freshness(500), 0.0);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(score_distance(0.0), 100.0);
        assert!((score_distance(1400.0) - 1.0).abs() < 1e-9);
        assert!((score_distance(700.0) - 10.0).abs() < 1e-9);
        assert!(score_distance(2800.0) < 1.0);
    }

    #[test]
    fn aggregate_examples() {
        assert!((aggregate(80.0, 60.0, 100.0, 20.0, &Weights::EQUAL) - 65.0).abs() < 1e-12);
        let w = Weights::new(0.55, 0.15, 0.15, 0.15).unwrap();
        assert!((aggregate(100.0, 0.0, 0.0, 0.0, &w) - 55.0).abs() < 1e-12);
        let w = Weights::new(0.8, 0.05, 0.05, 0.1).unwrap();
        assert!((aggregate(42.0, 42.0, 42.0, 42.0, &w) - 42.0).abs() < 1e-12);
    }

    fn weights() -> impl Strategy<Value = Weights> {
        (0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0, 0.01f64..1.0)
            .prop_map(|(a, b, c, d)| Weights::normalized(a, b, c, d).unwrap())
    }

    proptest! {
        #[test]
        fn similarity_symmetric_and_bounded(a in 0.0f64..5000.0, b in 0.0f64..5000.0) {
            prop_assert_eq!(score_price(a, b), score_price(b, a));
            prop_assert_eq!(score_quantity(a, b), score_quantity(b, a));
            let s = score_price(a, b);
            prop_assert!((0.0..=100.0).contains(&s));
        }

        #[test]
        fn similarity_increases_as_gap_shrinks(hi in 1.0f64..5000.0, f1 in 0.0f64..1.0, f2 in 0.0f64..1.0) {
            let (lo1, lo2) = (hi * f1.min(f2), hi * f1.max(f2));
            if lo2 - lo1 > 1e-9 * hi {
                prop_assert!(score_price(lo2, hi) > score_price(lo1, hi));
            }
        }

        #[test]
        fn distance_strictly_decreasing(d in 0.0f64..3000.0, step in 0.01f64..100.0) {
            prop_assert!(score_distance(d + step) < score_distance(d));
            prop_assert!(score_distance(d) > 0.0 && score_distance(d) <= 100.0);
        }

        #[test]
        fn freshness_non_increasing(days in 0i64..800, step in 0i64..50) {
            prop_assert!(score_freshness(days + step) <= score_freshness(days));
        }

        #[test]
        fn aggregate_is_convex(s in proptest::array::uniform4(0.0f64..=100.0), w in weights()) {
            let a = aggregate(s[0], s[1], s[2], s[3], &w);
            let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(a >= lo - 1e-9 && a <= hi + 1e-9);
        }

        #[test]
        fn scaling_weights_scales_aggregate(s in proptest::array::uniform4(0.0f64..=100.0), w in weights(), c in 0.1f64..10.0) {
            let a = aggregate(s[0], s[1], s[2], s[3], &w);
            let b = aggregate(s[0], s[1], s[2], s[3], &w.scaled(c));
            prop_assert!((b - c * a).abs() <= 1e-9 * (1.0 + c * a));
        }
    }
}
