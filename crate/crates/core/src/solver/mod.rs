//! Allocation MILP: candidate pruning, LP screening and exact solve.
//!
//! The model maximises `sum(score_a * x_a)` subject to
//!
//! * `sum_o x[f,o] <= qty_f` for every offer and `sum_f x[f,o] <= qty_o` for every order,
//! * `lower_a * y_a <= x_a <= upper_a * y_a` with `y_a` binary (minimum trade size),
//! * `sum_o y[f,o] <= 1` for single-order offers, `sum_f y[f,o] <= 1` for single-offer orders.
//!
//! `upper_a` is the smaller of the two remaining quantities, so no big-M
//! constant is needed. The continuous relaxation is a transportation problem
//! and is solved with the network simplex in [`network`]; branch-and-bound
//! in [`bnb`] restores the activation constraints.

mod bnb;
mod lp;
mod network;

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Offer, Order, QTY_TOL};
use crate::scoring::ScoredArc;

pub use lp::{solve_lp_relaxation, LpRelaxation};

/// How per-offer and per-order top-K lists combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneMode {
    /// Keep an arc ranked within the top K of its offer or of its order.
    #[default]
    Union,
    /// Keep an arc only if it is within the top K on both sides.
    Intersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub top_k: usize,
    pub prune_mode: PruneMode,
    pub screen_epsilon: f64,
    pub rel_gap: f64,
    pub node_limit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            top_k: 250,
            prune_mode: PruneMode::Union,
            screen_epsilon: 1e-6,
            rel_gap: 1e-6,
            node_limit: 100_000,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("LP solver failure ({detail}) on {arcs} arcs / {offers} offers / {orders} orders")]
    Numerical {
        detail: String,
        arcs: usize,
        offers: usize,
        orders: usize,
    },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Empty,
    NodeLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelArc {
    pub offer: usize,
    pub order: usize,
    pub score: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Compact MILP over a set of arcs; entity indices are local to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub arcs: Vec<ModelArc>,
    pub offer_capacity: Vec<f64>,
    pub order_capacity: Vec<f64>,
    pub offer_single: Vec<bool>,
    pub order_single: Vec<bool>,
    single_groups: Vec<Vec<usize>>,
}

impl MilpModel {
    pub fn new(
        arcs: Vec<ModelArc>,
        offer_capacity: Vec<f64>,
        order_capacity: Vec<f64>,
        offer_single: Vec<bool>,
        order_single: Vec<bool>,
    ) -> Result<Self, SolverError> {
        if offer_single.len() != offer_capacity.len() || order_single.len() != order_capacity.len() {
            return Err(SolverError::InvalidModel("flag and capacity lengths differ".into()));
        }
        for (i, a) in arcs.iter().enumerate() {
            if a.offer >= offer_capacity.len() || a.order >= order_capacity.len() {
                return Err(SolverError::InvalidModel(format!(
                    "arc {i} references a missing entity"
                )));
            }
            let finite = a.score.is_finite() && a.lower.is_finite() && a.upper.is_finite();
            if !finite || a.lower < 0.0 || a.upper < 0.0 {
                return Err(SolverError::InvalidModel(format!("arc {i} has invalid data")));
            }
        }
        if offer_capacity
            .iter()
            .chain(&order_capacity)
            .any(|c| !c.is_finite() || *c < 0.0)
        {
            return Err(SolverError::InvalidModel("negative or non-finite capacity".into()));
        }
        let mut offer_arcs = vec![Vec::new(); offer_capacity.len()];
        let mut order_arcs = vec![Vec::new(); order_capacity.len()];
        for (i, a) in arcs.iter().enumerate() {
            offer_arcs[a.offer].push(i);
            order_arcs[a.order].push(i);
        }
        let single_groups = offer_arcs
            .into_iter()
            .zip(&offer_single)
            .chain(order_arcs.into_iter().zip(&order_single))
            .filter(|(g, &single)| single && g.len() > 1)
            .map(|(g, _)| g)
            .collect();
        Ok(MilpModel {
            arcs,
            offer_capacity,
            order_capacity,
            offer_single,
            order_single,
            single_groups,
        })
    }

    /// Builds the model for `arcs`, whose indices point into `offers`/`orders`.
    pub fn from_scored(offers: &[Offer], orders: &[Order], arcs: &[&ScoredArc]) -> Self {
        let mut offer_local: HashMap<usize, usize> = HashMap::new();
        let mut order_local: HashMap<usize, usize> = HashMap::new();
        let mut offer_capacity = Vec::new();
        let mut order_capacity = Vec::new();
        let mut offer_single = Vec::new();
        let mut order_single = Vec::new();
        let mut model_arcs = Vec::with_capacity(arcs.len());
        for sa in arcs {
            let fi = sa.arc.offer_index;
            let oi = sa.arc.order_index;
            let f = *offer_local.entry(fi).or_insert_with(|| {
                offer_capacity.push(offers[fi].quantity);
                offer_single.push(offers[fi].single_order);
                offer_capacity.len() - 1
            });
            let o = *order_local.entry(oi).or_insert_with(|| {
                order_capacity.push(orders[oi].quantity);
                order_single.push(orders[oi].single_offer);
                order_capacity.len() - 1
            });
            model_arcs.push(ModelArc {
                offer: f,
                order: o,
                score: sa.scores.aggregate,
                lower: sa.arc.lower_bound,
                upper: sa.arc.upper_bound,
            });
        }
        MilpModel::new(model_arcs, offer_capacity, order_capacity, offer_single, order_single)
            .expect("scored arcs come from validated entities")
    }

    /// Arc lists of single-counterparty entities with at least two arcs.
    pub fn single_groups(&self) -> &[Vec<usize>] {
        &self.single_groups
    }

    /// True when the LP relaxation is already the MILP: no minimum trade
    /// sizes and no binding single-counterparty limits.
    pub fn is_pure_transport(&self) -> bool {
        self.single_groups.is_empty() && self.arcs.iter().all(|a| a.lower <= QTY_TOL)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.arcs.iter().zip(x).map(|(a, v)| a.score * v).sum()
    }
}

/// Quantity assigned to one arc of the solver's input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcAllocation {
    /// Index into the arc slice passed to [`solve`] or [`branch_and_bound`].
    pub arc: usize,
    pub quantity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub allocations: Vec<ArcAllocation>,
    pub objective_value: f64,
    pub status: SolveStatus,
    pub node_count: usize,
    pub lp_iterations: usize,
    /// LP relaxation bound over the pruned arc set.
    pub lp_bound: f64,
    /// Relative gap between best bound and objective.
    pub gap: f64,
    /// Input indices dropped by top-K pruning.
    pub pruned: Vec<usize>,
    /// Input indices dropped by LP screening.
    pub screened: Vec<usize>,
}

impl SolveReport {
    fn empty() -> Self {
        SolveReport {
            allocations: Vec::new(),
            objective_value: 0.0,
            status: SolveStatus::Empty,
            node_count: 0,
            lp_iterations: 0,
            lp_bound: 0.0,
            gap: 0.0,
            pruned: Vec::new(),
            screened: Vec::new(),
        }
    }

    pub fn pruned_arcs(&self) -> usize {
        self.pruned.len()
    }

    pub fn screened_arcs(&self) -> usize {
        self.screened.len()
    }
}

/// Ranking used by pruning: higher score, then offer id, then order id.
fn rank(a: &ScoredArc, b: &ScoredArc) -> Ordering {
    b.scores
        .aggregate
        .total_cmp(&a.scores.aggregate)
        .then_with(|| a.arc.offer_id.cmp(&b.arc.offer_id))
        .then_with(|| a.arc.order_id.cmp(&b.arc.order_id))
}

/// Indices (ascending) of arcs ranked within the top `k` of their order or
/// of their offer.
pub fn prune_topk(arcs: &[ScoredArc], k: usize) -> Vec<usize> {
    prune_topk_with(arcs, k, PruneMode::Union)
}

pub fn prune_topk_with(arcs: &[ScoredArc], k: usize, mode: PruneMode) -> Vec<usize> {
    let k = k.max(1);
    let mut by_offer: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut by_order: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, a) in arcs.iter().enumerate() {
        by_offer.entry(a.arc.offer_index).or_default().push(i);
        by_order.entry(a.arc.order_index).or_default().push(i);
    }
    let top = |groups: &mut HashMap<usize, Vec<usize>>| {
        let mut hit = vec![false; arcs.len()];
        for group in groups.values_mut() {
            if group.len() > k {
                group.sort_by(|&x, &y| rank(&arcs[x], &arcs[y]));
                group.truncate(k);
            }
            group.iter().for_each(|&i| hit[i] = true);
        }
        hit
    };
    let offer_top = top(&mut by_offer);
    let order_top = top(&mut by_order);
    (0..arcs.len())
        .filter(|&i| match mode {
            PruneMode::Union => offer_top[i] || order_top[i],
            PruneMode::Intersection => offer_top[i] && order_top[i],
        })
        .collect()
}

/// Indices (ascending) of arcs that survive LP screening.
///
/// Arcs whose relaxed flow is below `epsilon` are dropped, worst-ranked
/// first, unless that would leave their offer or order without any arc.
pub fn lp_screen(arcs: &[ScoredArc], relaxed_flows: &[f64], epsilon: f64) -> Vec<usize> {
    let refs: Vec<&ScoredArc> = arcs.iter().collect();
    screen_refs(&refs, relaxed_flows, epsilon)
}

fn screen_refs(arcs: &[&ScoredArc], relaxed_flows: &[f64], epsilon: f64) -> Vec<usize> {
    assert_eq!(arcs.len(), relaxed_flows.len());
    let mut offer_count: HashMap<usize, usize> = HashMap::new();
    let mut order_count: HashMap<usize, usize> = HashMap::new();
    for a in arcs {
        *offer_count.entry(a.arc.offer_index).or_default() += 1;
        *order_count.entry(a.arc.order_index).or_default() += 1;
    }
    let mut candidates: Vec<usize> = (0..arcs.len()).filter(|&i| relaxed_flows[i] < epsilon).collect();
    // worst first
    candidates.sort_by(|&x, &y| rank(arcs[y], arcs[x]));
    let mut keep = vec![true; arcs.len()];
    for i in candidates {
        let f = offer_count.get_mut(&arcs[i].arc.offer_index).expect("counted");
        let o = order_count.get_mut(&arcs[i].arc.order_index).expect("counted");
        if *f > 1 && *o > 1 {
            *f -= 1;
            *o -= 1;
            keep[i] = false;
        }
    }
    (0..arcs.len()).filter(|&i| keep[i]).collect()
}

/// Exact solve of the MILP over every arc of `model`.
pub fn branch_and_bound(model: &MilpModel, config: &SolverConfig) -> Result<SolveReport, SolverError> {
    if model.arcs.is_empty() {
        return Ok(SolveReport::empty());
    }
    let out = bnb::branch_and_bound(model, config)?;
    Ok(SolveReport {
        allocations: out
            .x
            .iter()
            .enumerate()
            .filter(|(_, &q)| q >= bnb::ACTIVE_TOL)
            .map(|(arc, &quantity)| ArcAllocation { arc, quantity })
            .collect(),
        objective_value: out.objective,
        gap: out.gap(),
        status: out.status,
        node_count: out.nodes,
        lp_iterations: out.lp_iterations,
        lp_bound: out.best_bound,
        pruned: Vec::new(),
        screened: Vec::new(),
    })
}

/// Full pipeline: top-K pruning, LP relaxation, LP screening, then
/// branch-and-bound. When the pruned model has no minimum trade sizes and no
/// single-counterparty limits, the relaxation is returned directly.
pub fn solve(
    offers: &[Offer],
    orders: &[Order],
    arcs: &[ScoredArc],
    config: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    if arcs.is_empty() {
        return Ok(SolveReport::empty());
    }
    let kept = prune_topk_with(arcs, config.top_k, config.prune_mode);
    let pruned = complement(arcs.len(), &kept);
    let kept_arcs: Vec<&ScoredArc> = kept.iter().map(|&i| &arcs[i]).collect();
    let model = MilpModel::from_scored(offers, orders, &kept_arcs);
    let relaxed = solve_lp_relaxation(&model)?;
    log::debug!(
        "relaxation: {} arcs ({} pruned), bound {:.3}, {} pivots",
        kept.len(),
        pruned.len(),
        relaxed.bound,
        relaxed.iterations
    );

    if model.is_pure_transport() {
        let allocations = kept
            .iter()
            .zip(&relaxed.flows)
            .filter(|(_, &q)| q >= bnb::ACTIVE_TOL)
            .map(|(&arc, &quantity)| ArcAllocation { arc, quantity })
            .collect();
        return Ok(SolveReport {
            allocations,
            objective_value: relaxed.bound,
            status: SolveStatus::Optimal,
            node_count: 0,
            lp_iterations: relaxed.iterations,
            lp_bound: relaxed.bound,
            gap: 0.0,
            pruned,
            screened: Vec::new(),
        });
    }

    let survivors = screen_refs(&kept_arcs, &relaxed.flows, config.screen_epsilon);
    let screened: Vec<usize> = complement(kept.len(), &survivors)
        .into_iter()
        .map(|i| kept[i])
        .collect();
    let final_arcs: Vec<&ScoredArc> = survivors.iter().map(|&i| kept_arcs[i]).collect();
    let model = MilpModel::from_scored(offers, orders, &final_arcs);
    let mut report = branch_and_bound(&model, config)?;
    log::debug!(
        "branch-and-bound: {} arcs ({} screened), {} nodes, objective {:.3}, gap {:.2e}",
        final_arcs.len(),
        screened.len(),
        report.node_count,
        report.objective_value,
        report.gap
    );
    for a in &mut report.allocations {
        a.arc = kept[survivors[a.arc]];
    }
    report.lp_iterations += relaxed.iterations;
    report.lp_bound = relaxed.bound;
    report.pruned = pruned;
    report.screened = screened;
    Ok(report)
}

fn complement(n: usize, kept: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    kept.iter().for_each(|&i| mask[i] = false);
    (0..n).filter(|&i| mask[i]).collect()
}
