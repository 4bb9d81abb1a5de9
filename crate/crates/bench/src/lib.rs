//! Fixtures shared by the criterion benches.

use circalloc::datagen::{generate, Dataset, GenConfig};
use circalloc::engine::EngineConfig;
use circalloc::{build_arcs, score_arcs, MatchContext, ScoredArc, Weights};

/// Seeded market whose totals scale with the entity counts of the default one.
pub fn market(n_orders: usize, n_offers: usize) -> Dataset {
    let base = GenConfig::default();
    let config = GenConfig {
        n_orders,
        n_offers,
        total_demand: base.total_demand * n_orders as f64 / base.n_orders as f64,
        total_supply: base.total_supply * n_offers as f64 / base.n_offers as f64,
        ..base
    };
    generate(&config).expect("valid generator config")
}

pub fn scored_arcs(data: &Dataset, weights: &Weights) -> Vec<ScoredArc> {
    let ctx = MatchContext {
        index: &data.postcodes,
        reference_date: EngineConfig::default().reference_date,
    };
    let set = build_arcs(&data.offers, &data.orders, &ctx).expect("generated postcodes resolve");
    score_arcs(&set.arcs, &data.offers, &data.orders, weights)
}
