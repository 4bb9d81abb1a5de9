//! Best-bound branch-and-bound over arc activations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::lp::{solve_node, Fix};
use super::{MilpModel, SolveStatus, SolverConfig, SolverError};

/// Flow below this is treated as zero when testing activations.
pub(crate) const ACTIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub(crate) struct BnbOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub best_bound: f64,
}

impl BnbOutcome {
    pub fn gap(&self) -> f64 {
        (self.best_bound - self.objective).max(0.0) / self.objective.abs().max(1e-9)
    }
}

struct Node {
    fixes: Vec<Fix>,
    /// Parent's LP value, an upper bound on this subtree.
    estimate: f64,
    seq: u64,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap: higher estimate first, then older node
        self.estimate
            .total_cmp(&other.estimate)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn violates_min_trade(model: &MilpModel, fixes: &[Fix], i: usize, x: f64) -> Option<f64> {
    let lower = model.arcs[i].lower;
    if fixes[i] == Fix::Free && x > ACTIVE_TOL && x < lower - ACTIVE_TOL {
        Some(x.min(lower - x))
    } else {
        None
    }
}

/// Arc to branch on (children Off and On), or `None` if `x` is feasible for
/// the full model.
fn select_branch(model: &MilpModel, fixes: &[Fix], x: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in x.iter().enumerate() {
        if let Some(viol) = violates_min_trade(model, fixes, i, v) {
            if best.is_none_or(|(_, b)| viol > b) {
                best = Some((i, viol));
            }
        }
    }
    if let Some((i, _)) = best {
        return Some(i);
    }

    // single-counterparty: entity with the largest activation sum among those
    // with two or more active arcs
    let mut best: Option<(f64, usize)> = None;
    for arcs in model.single_groups() {
        let active: Vec<usize> = arcs.iter().copied().filter(|&i| x[i] > ACTIVE_TOL).collect();
        if active.len() < 2 {
            continue;
        }
        let activation: f64 = active.iter().map(|&i| x[i] / model.arcs[i].upper).sum();
        let pick = active
            .iter()
            .copied()
            .filter(|&i| fixes[i] == Fix::Free)
            .fold(None, |acc: Option<usize>, i| match acc {
                Some(j) if x[j] >= x[i] => Some(j),
                _ => Some(i),
            });
        if let Some(arc) = pick {
            if best.is_none_or(|(b, _)| activation > b) {
                best = Some((activation, arc));
            }
        }
    }
    best.map(|(_, arc)| arc)
}

/// Zeroes every flow that breaks a minimum trade or a single-counterparty
/// limit. Lowering flows never breaks a capacity row, so the result is
/// feasible.
fn repair(model: &MilpModel, fixes: &[Fix], x: &[f64]) -> (Vec<f64>, f64) {
    let mut y: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v <= ACTIVE_TOL || violates_min_trade(model, fixes, i, v).is_some() {
                0.0
            } else {
                v
            }
        })
        .collect();
    for arcs in model.single_groups() {
        let keep = arcs.iter().copied().filter(|&i| y[i] > 0.0).max_by(|&a, &b| {
            let on = |i: usize| fixes[i] == Fix::On;
            on(a)
                .cmp(&on(b))
                .then((model.arcs[a].score * y[a]).total_cmp(&(model.arcs[b].score * y[b])))
                .then(b.cmp(&a))
        });
        for &i in arcs {
            if Some(i) != keep {
                y[i] = 0.0;
            }
        }
    }
    let obj = model.arcs.iter().zip(&y).map(|(a, v)| a.score * v).sum();
    (y, obj)
}

struct Incumbent {
    x: Vec<f64>,
    objective: f64,
}

impl Incumbent {
    fn offer(&mut self, x: Vec<f64>, objective: f64) {
        if objective > self.objective {
            self.x = x;
            self.objective = objective;
        }
    }
}

/// Repeatedly switches off every violating arc and re-solves until the LP
/// point is feasible. Gives a strong first incumbent at a few LP solves.
fn dive(model: &MilpModel, root_x: &[f64], lp_iterations: &mut usize) -> Result<Option<(Vec<f64>, f64)>, SolverError> {
    let mut fixes = vec![Fix::Free; model.arcs.len()];
    let mut x = root_x.to_vec();
    loop {
        let mut changed = false;
        for (i, &v) in x.iter().enumerate() {
            if violates_min_trade(model, &fixes, i, v).is_some() {
                fixes[i] = Fix::Off;
                changed = true;
            }
        }
        for arcs in model.single_groups() {
            let active: Vec<usize> = arcs.iter().copied().filter(|&i| x[i] > ACTIVE_TOL).collect();
            if active.len() < 2 {
                continue;
            }
            let keep = active
                .iter()
                .copied()
                .max_by(|&a, &b| x[a].total_cmp(&x[b]).then(b.cmp(&a)))
                .expect("non-empty");
            for i in active {
                if i != keep {
                    fixes[i] = Fix::Off;
                    changed = true;
                }
            }
        }
        if !changed {
            let obj = model.arcs.iter().zip(&x).map(|(a, v)| a.score * v).sum();
            return Ok(Some((x, obj)));
        }
        match solve_node(model, &fixes)? {
            Some(p) => {
                *lp_iterations += p.pivots;
                x = p.x;
            }
            None => return Ok(None),
        }
    }
}

pub(crate) fn branch_and_bound(model: &MilpModel, config: &SolverConfig) -> Result<BnbOutcome, SolverError> {
    let n = model.arcs.len();
    let mut incumbent = Incumbent {
        x: vec![0.0; n],
        objective: 0.0,
    };
    if n == 0 {
        return Ok(BnbOutcome {
            x: Vec::new(),
            objective: 0.0,
            status: SolveStatus::Empty,
            nodes: 0,
            lp_iterations: 0,
            best_bound: 0.0,
        });
    }

    let mut lp_iterations = 0;
    let mut nodes = 0;
    let mut seq = 0u64;
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        fixes: vec![Fix::Free; n],
        estimate: f64::INFINITY,
        seq,
    });
    let mut root_done = false;
    let abs_gap = |inc: f64| config.rel_gap * inc.abs().max(1.0);

    while let Some(node) = heap.pop() {
        if node.estimate <= incumbent.objective + abs_gap(incumbent.objective) {
            // every open node is at most this good
            heap.clear();
            break;
        }
        if nodes >= config.node_limit {
            heap.push(node);
            break;
        }
        nodes += 1;
        let Some(point) = solve_node(model, &node.fixes)? else {
            continue;
        };
        lp_iterations += point.pivots;

        if !root_done {
            root_done = true;
            if let Some((x, obj)) = dive(model, &point.x, &mut lp_iterations)? {
                incumbent.offer(x, obj);
            }
        }

        let (fixed, obj) = repair(model, &node.fixes, &point.x);
        incumbent.offer(fixed, obj);

        if point.objective <= incumbent.objective + abs_gap(incumbent.objective) {
            continue;
        }
        match select_branch(model, &node.fixes, &point.x) {
            None => incumbent.offer(point.x, point.objective),
            Some(i) => {
                for fix in [Fix::On, Fix::Off] {
                    let mut fixes = node.fixes.clone();
                    fixes[i] = fix;
                    seq += 1;
                    heap.push(Node {
                        fixes,
                        estimate: point.objective,
                        seq,
                    });
                }
            }
        }
    }

    let open_bound = heap.iter().map(|n| n.estimate).fold(f64::NEG_INFINITY, f64::max);
    let status = if heap.is_empty() {
        SolveStatus::Optimal
    } else {
        SolveStatus::NodeLimit
    };
    let best_bound = open_bound.max(incumbent.objective);
    let x = incumbent
        .x
        .into_iter()
        .map(|v| if v < ACTIVE_TOL { 0.0 } else { v })
        .collect();
    Ok(BnbOutcome {
        x,
        objective: incumbent.objective,
        status,
        nodes,
        lp_iterations,
        best_bound,
    })
}
