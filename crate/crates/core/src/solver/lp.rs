//! LP relaxation of the allocation model as a transportation network.

use super::network::{self, Arc, NetworkError};
use super::{MilpModel, SolverError};

/// Per-arc activation decision carried by branch-and-bound nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Fix {
    Free,
    /// y = 0, so x = 0.
    Off,
    /// y = 1, so lower <= x <= upper.
    On,
}

#[derive(Debug, Clone)]
pub(crate) struct LpPoint {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

/// Result of the root relaxation: one flow per model arc and the LP bound.
#[derive(Debug, Clone, PartialEq)]
pub struct LpRelaxation {
    pub flows: Vec<f64>,
    pub bound: f64,
    pub iterations: usize,
}

/// Solves `max sum(score * x)` under supply/demand rows and per-arc bounds
/// implied by `fixes`. `Ok(None)` means the fixes admit no feasible point.
///
/// Single-counterparty rows are not part of the LP; an `On` arc on a flagged
/// entity switches its siblings off, and two `On` arcs there are infeasible.
pub(crate) fn solve_node(model: &MilpModel, fixes: &[Fix]) -> Result<Option<LpPoint>, SolverError> {
    let n_arcs = model.arcs.len();
    debug_assert_eq!(fixes.len(), n_arcs);

    let mut offer_on = vec![usize::MAX; model.offer_capacity.len()];
    let mut order_on = vec![usize::MAX; model.order_capacity.len()];
    for (i, a) in model.arcs.iter().enumerate() {
        if fixes[i] != Fix::On {
            continue;
        }
        if a.lower > a.upper {
            return Ok(None);
        }
        if model.offer_single[a.offer] {
            if offer_on[a.offer] != usize::MAX {
                return Ok(None);
            }
            offer_on[a.offer] = i;
        }
        if model.order_single[a.order] {
            if order_on[a.order] != usize::MAX {
                return Ok(None);
            }
            order_on[a.order] = i;
        }
    }

    let offers = model.offer_capacity.len();
    let orders = model.order_capacity.len();
    let source = 0;
    let sink = 1;
    let offer_node = |f: usize| 2 + f;
    let order_node = |o: usize| 2 + offers + o;
    let node_count = 2 + offers + orders;

    let mut arcs = Vec::with_capacity(n_arcs + offers + orders + 1);
    let mut used = Vec::with_capacity(n_arcs);
    for (i, a) in model.arcs.iter().enumerate() {
        let blocked = fixes[i] == Fix::Off
            || (offer_on[a.offer] != usize::MAX && offer_on[a.offer] != i)
            || (order_on[a.order] != usize::MAX && order_on[a.order] != i);
        if blocked || a.upper <= 0.0 {
            continue;
        }
        let lower = if fixes[i] == Fix::On { a.lower } else { 0.0 };
        arcs.push(Arc {
            source: offer_node(a.offer),
            target: order_node(a.order),
            lower,
            upper: a.upper,
            cost: -a.score,
        });
        used.push(i);
    }
    let mut total_supply = 0.0;
    for (f, &cap) in model.offer_capacity.iter().enumerate() {
        arcs.push(Arc {
            source,
            target: offer_node(f),
            lower: 0.0,
            upper: cap,
            cost: 0.0,
        });
        total_supply += cap;
    }
    for (o, &cap) in model.order_capacity.iter().enumerate() {
        arcs.push(Arc {
            source: order_node(o),
            target: sink,
            lower: 0.0,
            upper: cap,
            cost: 0.0,
        });
    }
    arcs.push(Arc {
        source: sink,
        target: source,
        lower: 0.0,
        upper: total_supply,
        cost: 0.0,
    });

    let supply = vec![0.0; node_count];
    match network::min_cost_flow(node_count, &supply, &arcs) {
        Ok(sol) => {
            let mut x = vec![0.0; n_arcs];
            for (k, &i) in used.iter().enumerate() {
                x[i] = sol.flow[k];
            }
            let objective: f64 = model.arcs.iter().zip(&x).map(|(a, v)| a.score * v).sum();
            debug_assert!((objective + sol.cost).abs() <= 1e-6 * (1.0 + objective.abs()));
            Ok(Some(LpPoint {
                x,
                objective,
                pivots: sol.pivots,
            }))
        }
        Err(NetworkError::Infeasible) => Ok(None),
        Err(e) => Err(SolverError::Numerical {
            detail: format!("{e:?}"),
            arcs: n_arcs,
            offers,
            orders,
        }),
    }
}

/// Continuous relaxation: activation integrality and single-counterparty
/// limits dropped, leaving `0 <= x <= upper` under the capacity rows.
pub fn solve_lp_relaxation(model: &MilpModel) -> Result<LpRelaxation, SolverError> {
    if model.arcs.is_empty() {
        return Ok(LpRelaxation {
            flows: Vec::new(),
            bound: 0.0,
            iterations: 0,
        });
    }
    let fixes = vec![Fix::Free; model.arcs.len()];
    let point = solve_node(model, &fixes)?.ok_or_else(|| SolverError::Numerical {
        detail: "relaxation reported infeasible".to_string(),
        arcs: model.arcs.len(),
        offers: model.offer_capacity.len(),
        orders: model.order_capacity.len(),
    })?;
    Ok(LpRelaxation {
        flows: point.x,
        bound: point.objective,
        iterations: point.pivots,
    })
}
