// Brute-force reference for the allocation MILP on tiny instances.
//
// Every activation pattern y in {0,1}^arcs is enumerated. Patterns that break a
// single-counterparty limit, or switch on an arc whose minimum exceeds its
// capacity, are skipped. For the rest the remaining LP (active arcs bounded to
// [lower, upper], inactive arcs at 0, capacity rows) is solved with `minilp`.
// The answer is the best objective over all patterns.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

#[derive(Debug, Clone, Copy)]
pub struct OracleArc {
    pub offer: usize,
    pub order: usize,
    pub score: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub arcs: Vec<OracleArc>,
    pub offer_capacity: Vec<f64>,
    pub order_capacity: Vec<f64>,
    pub offer_single: Vec<bool>,
    pub order_single: Vec<bool>,
}

pub fn brute_force_optimum(inst: &OracleInstance) -> f64 {
    let n = inst.arcs.len();
    assert!(n <= 16, "oracle is exponential in the arc count");
    let mut best = 0.0f64;
    'patterns: for mask in 1u32..(1u32 << n) {
        let active: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut offer_used = vec![0usize; inst.offer_capacity.len()];
        let mut order_used = vec![0usize; inst.order_capacity.len()];
        for &i in &active {
            let a = inst.arcs[i];
            if a.lower > a.upper {
                continue 'patterns;
            }
            offer_used[a.offer] += 1;
            order_used[a.order] += 1;
        }
        for (f, &used) in offer_used.iter().enumerate() {
            if inst.offer_single[f] && used > 1 {
                continue 'patterns;
            }
        }
        for (o, &used) in order_used.iter().enumerate() {
            if inst.order_single[o] && used > 1 {
                continue 'patterns;
            }
        }

        let mut problem = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = active
            .iter()
            .map(|&i| {
                let a = inst.arcs[i];
                problem.add_var(a.score, (a.lower, a.upper))
            })
            .collect();
        for (f, &cap) in inst.offer_capacity.iter().enumerate() {
            let row: Vec<_> = active
                .iter()
                .zip(&vars)
                .filter(|(&i, _)| inst.arcs[i].offer == f)
                .map(|(_, &v)| (v, 1.0))
                .collect();
            if !row.is_empty() {
                problem.add_constraint(row.as_slice(), ComparisonOp::Le, cap);
            }
        }
        for (o, &cap) in inst.order_capacity.iter().enumerate() {
            let row: Vec<_> = active
                .iter()
                .zip(&vars)
                .filter(|(&i, _)| inst.arcs[i].order == o)
                .map(|(_, &v)| (v, 1.0))
                .collect();
            if !row.is_empty() {
                problem.add_constraint(row.as_slice(), ComparisonOp::Le, cap);
            }
        }
        if let Ok(sol) = problem.solve() {
            best = best.max(sol.objective());
        }
    }
    best
}

/// Random instance with at most 4 offers, 3 orders and 12 arcs.
pub fn random_instance<R: rand::Rng>(rng: &mut R) -> OracleInstance {
    let offers = rng.random_range(1..=4usize);
    let orders = rng.random_range(1..=3usize);
    let offer_capacity: Vec<f64> = (0..offers)
        .map(|_| f64::from(rng.random_range(1..=40u32)) * 0.5)
        .collect();
    let order_capacity: Vec<f64> = (0..orders)
        .map(|_| f64::from(rng.random_range(1..=40u32)) * 0.5)
        .collect();
    let offer_single = (0..offers).map(|_| rng.random_bool(0.3)).collect();
    let order_single = (0..orders).map(|_| rng.random_bool(0.3)).collect();
    let mut arcs = Vec::new();
    for (f, &supply) in offer_capacity.iter().enumerate() {
        for (o, &demand) in order_capacity.iter().enumerate() {
            if arcs.len() < 12 && rng.random_bool(0.8) {
                let upper = supply.min(demand);
                let lower = if rng.random_bool(0.6) {
                    upper * rng.random_range(0.0..1.2)
                } else {
                    0.0
                };
                arcs.push(OracleArc {
                    offer: f,
                    order: o,
                    score: rng.random_range(1.0..100.0),
                    lower,
                    upper,
                });
            }
        }
    }
    OracleInstance {
        arcs,
        offer_capacity,
        order_capacity,
        offer_single,
        order_single,
    }
}
