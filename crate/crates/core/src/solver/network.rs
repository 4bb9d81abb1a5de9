//! Primal network simplex for min-cost flow with bounded arcs.
//!
//! Bounded-variable simplex specialised to network matrices: the basis is a
//! spanning tree rooted at an artificial node, entering arcs are priced in
//! blocks, and the leaving arc follows the strongly-feasible-tree rule so
//! degenerate pivots cannot cycle. The start basis is made only of
//! artificial arcs with a big-M cost; any artificial flow left at the
//! optimum means the bounds are infeasible.
//!
//! The tree is rebuilt from its arc set after each basis change. That is
//! O(nodes) per pivot, which is negligible next to pricing for the
//! bipartite instances this module serves (about a thousand nodes).

const STATE_UPPER: i8 = -1;
const STATE_TREE: i8 = 0;
const STATE_LOWER: i8 = 1;

const DIR_UP: i8 = 1;
const DIR_DOWN: i8 = -1;

/// Reduced-cost tolerance for pricing.
const PRICE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Arc {
    pub source: usize,
    pub target: usize,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum NetworkError {
    Infeasible,
    Unbounded,
    /// Bounds with `lower > upper`, or non-finite data.
    BadInput,
}

#[derive(Debug, Clone)]
pub(crate) struct NetworkSolution {
    pub flow: Vec<f64>,
    pub cost: f64,
    pub pivots: usize,
}

/// Min-cost circulation with supplies `supply[v]` (outflow minus inflow).
pub(crate) fn min_cost_flow(node_count: usize, supply: &[f64], arcs: &[Arc]) -> Result<NetworkSolution, NetworkError> {
    debug_assert_eq!(supply.len(), node_count);
    let mut ns = Simplex::new(node_count, supply, arcs)?;
    ns.run()?;
    let mut flow = Vec::with_capacity(arcs.len());
    let mut cost = 0.0;
    for (e, arc) in arcs.iter().enumerate() {
        let x = (arc.lower + ns.flow[e]).clamp(arc.lower, arc.upper);
        cost += arc.cost * x;
        flow.push(x);
    }
    Ok(NetworkSolution {
        flow,
        cost,
        pivots: ns.pivots,
    })
}

struct Simplex {
    node_count: usize,
    root: usize,
    arc_count: usize,
    source: Vec<usize>,
    target: Vec<usize>,
    cost: Vec<f64>,
    // residual capacity after shifting lower bounds to 0; INFINITY for artificials
    cap: Vec<f64>,
    flow: Vec<f64>,
    state: Vec<i8>,

    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<i8>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    tree_adj: Vec<Vec<usize>>,

    next_arc: usize,
    block_size: usize,
    pivots: usize,
    art_tol: f64,
    stack: Vec<usize>,
}

impl Simplex {
    fn new(node_count: usize, supply: &[f64], arcs: &[Arc]) -> Result<Self, NetworkError> {
        let m = arcs.len();
        let root = node_count;
        let total = m + node_count;

        let mut b = supply.to_vec();
        let mut source = Vec::with_capacity(total);
        let mut target = Vec::with_capacity(total);
        let mut cost = Vec::with_capacity(total);
        let mut cap = Vec::with_capacity(total);
        let mut max_cost = 0f64;
        for a in arcs {
            if !(a.lower.is_finite() && a.upper.is_finite() && a.cost.is_finite()) || a.lower > a.upper {
                return Err(NetworkError::BadInput);
            }
            source.push(a.source);
            target.push(a.target);
            cost.push(a.cost);
            cap.push(a.upper - a.lower);
            max_cost = max_cost.max(a.cost.abs());
            b[a.source] -= a.lower;
            b[a.target] += a.lower;
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(NetworkError::BadInput);
        }
        let art_cost = (max_cost + 1.0) * (node_count as f64 + 1.0);
        let scale = b.iter().map(|v| v.abs()).sum::<f64>().max(1.0);

        let mut flow = vec![0.0; total];
        let mut state = vec![STATE_LOWER; total];
        let mut parent = vec![root; node_count + 1];
        let mut pred = vec![usize::MAX; node_count + 1];
        let mut pred_dir = vec![DIR_UP; node_count + 1];
        let mut depth = vec![1usize; node_count + 1];
        let mut pi = vec![0.0; node_count + 1];
        let mut tree_adj = vec![Vec::new(); node_count + 1];
        depth[root] = 0;
        parent[root] = usize::MAX;

        for u in 0..node_count {
            let e = m + u;
            if b[u] >= 0.0 {
                source.push(u);
                target.push(root);
                flow[e] = b[u];
                pred_dir[u] = DIR_UP;
                pi[u] = -art_cost;
            } else {
                source.push(root);
                target.push(u);
                flow[e] = -b[u];
                pred_dir[u] = DIR_DOWN;
                pi[u] = art_cost;
            }
            cost.push(art_cost);
            cap.push(f64::INFINITY);
            state[e] = STATE_TREE;
            pred[u] = e;
            tree_adj[u].push(e);
            tree_adj[root].push(e);
        }

        let block_size = ((m as f64).sqrt() as usize).max(10);
        Ok(Simplex {
            node_count,
            root,
            arc_count: m,
            source,
            target,
            cost,
            cap,
            flow,
            state,
            parent,
            pred,
            pred_dir,
            depth,
            pi,
            tree_adj,
            next_arc: 0,
            block_size,
            pivots: 0,
            art_tol: 1e-9 * scale,
            stack: Vec::new(),
        })
    }

    fn reduced_cost(&self, e: usize) -> f64 {
        self.cost[e] + self.pi[self.source[e]] - self.pi[self.target[e]]
    }

    /// Block search: scan arcs cyclically, return the most violating arc of
    /// the first block that contains any violation.
    fn find_entering(&mut self) -> Option<usize> {
        let m = self.arc_count;
        if m == 0 {
            return None;
        }
        let mut best = None;
        let mut min = -PRICE_TOL;
        let mut cnt = self.block_size;
        let mut e = self.next_arc;
        for _ in 0..m {
            let c = f64::from(self.state[e]) * self.reduced_cost(e);
            if c < min {
                min = c;
                best = Some(e);
            }
            cnt -= 1;
            e += 1;
            if e == m {
                e = 0;
            }
            if cnt == 0 {
                if best.is_some() {
                    self.next_arc = e;
                    return best;
                }
                cnt = self.block_size;
            }
        }
        if best.is_some() {
            self.next_arc = e;
        }
        best
    }

    fn find_join(&self, mut u: usize, mut v: usize) -> usize {
        while u != v {
            if self.depth[u] >= self.depth[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        u
    }

    fn run(&mut self) -> Result<(), NetworkError> {
        while let Some(in_arc) = self.find_entering() {
            self.pivot(in_arc)?;
        }
        for e in self.arc_count..self.arc_count + self.node_count {
            if self.flow[e] > self.art_tol {
                return Err(NetworkError::Infeasible);
            }
        }
        Ok(())
    }

    fn pivot(&mut self, in_arc: usize) -> Result<(), NetworkError> {
        self.pivots += 1;
        let (first, second) = if self.state[in_arc] == STATE_LOWER {
            (self.source[in_arc], self.target[in_arc])
        } else {
            (self.target[in_arc], self.source[in_arc])
        };
        let join = self.find_join(first, second);

        let mut delta = self.cap[in_arc];
        // 0: entering arc blocks itself; otherwise the node whose pred arc leaves
        let mut u_out = usize::MAX;
        let mut out_to_upper = false;

        let mut u = first;
        while u != join {
            let e = self.pred[u];
            let (d, up) = if self.pred_dir[u] == DIR_DOWN {
                (self.cap[e] - self.flow[e], true)
            } else {
                (self.flow[e], false)
            };
            if d < delta {
                delta = d;
                u_out = u;
                out_to_upper = up;
            }
            u = self.parent[u];
        }
        let mut u = second;
        while u != join {
            let e = self.pred[u];
            let (d, up) = if self.pred_dir[u] == DIR_UP {
                (self.cap[e] - self.flow[e], true)
            } else {
                (self.flow[e], false)
            };
            if d <= delta {
                delta = d;
                u_out = u;
                out_to_upper = up;
            }
            u = self.parent[u];
        }
        if !delta.is_finite() {
            return Err(NetworkError::Unbounded);
        }
        let delta = delta.max(0.0);

        if delta > 0.0 {
            let val = f64::from(self.state[in_arc]) * delta;
            self.flow[in_arc] += val;
            let mut u = self.source[in_arc];
            while u != join {
                let e = self.pred[u];
                self.flow[e] -= f64::from(self.pred_dir[u]) * val;
                u = self.parent[u];
            }
            let mut u = self.target[in_arc];
            while u != join {
                let e = self.pred[u];
                self.flow[e] += f64::from(self.pred_dir[u]) * val;
                u = self.parent[u];
            }
        }

        if u_out == usize::MAX {
            // bound flip, basis unchanged
            self.state[in_arc] = -self.state[in_arc];
            self.flow[in_arc] = if self.state[in_arc] == STATE_UPPER {
                self.cap[in_arc]
            } else {
                0.0
            };
            return Ok(());
        }

        let out_arc = self.pred[u_out];
        if out_to_upper {
            self.flow[out_arc] = self.cap[out_arc];
            self.state[out_arc] = STATE_UPPER;
        } else {
            self.flow[out_arc] = 0.0;
            self.state[out_arc] = STATE_LOWER;
        }
        self.state[in_arc] = STATE_TREE;

        for node in [self.source[out_arc], self.target[out_arc]] {
            let adj = &mut self.tree_adj[node];
            let pos = adj.iter().position(|&a| a == out_arc).expect("tree arc present");
            adj.swap_remove(pos);
        }
        self.tree_adj[self.source[in_arc]].push(in_arc);
        self.tree_adj[self.target[in_arc]].push(in_arc);
        self.rebuild_tree();
        Ok(())
    }

    /// Recomputes parents, depths and potentials by DFS from the root.
    fn rebuild_tree(&mut self) {
        let root = self.root;
        self.stack.clear();
        self.stack.push(root);
        self.pred[root] = usize::MAX;
        while let Some(u) = self.stack.pop() {
            for i in 0..self.tree_adj[u].len() {
                let e = self.tree_adj[u][i];
                if e == self.pred[u] {
                    continue;
                }
                let (v, dir) = if self.source[e] == u {
                    (self.target[e], DIR_DOWN)
                } else {
                    (self.source[e], DIR_UP)
                };
                self.parent[v] = u;
                self.pred[v] = e;
                self.pred_dir[v] = dir;
                self.depth[v] = self.depth[u] + 1;
                // tree arcs have zero reduced cost: pi[t] = pi[s] + cost
                self.pi[v] = if dir == DIR_DOWN {
                    self.pi[u] + self.cost[e]
                } else {
                    self.pi[u] - self.cost[e]
                };
                self.stack.push(v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arc(source: usize, target: usize, lower: f64, upper: f64, cost: f64) -> Arc {
        Arc {
            source,
            target,
            lower,
            upper,
            cost,
        }
    }

    #[test]
    fn simple_transport() {
        // 0,1 supply 10 and 5; 2,3 demand 8 and 7
        let supply = [10.0, 5.0, -8.0, -7.0];
        let arcs = [
            arc(0, 2, 0.0, 100.0, 1.0),
            arc(0, 3, 0.0, 100.0, 4.0),
            arc(1, 2, 0.0, 100.0, 2.0),
            arc(1, 3, 0.0, 100.0, 1.0),
        ];
        let sol = min_cost_flow(4, &supply, &arcs).unwrap();
        // 0->2: 8, 0->3: 2, 1->3: 5 => 8 + 8 + 5 = 21
        assert!((sol.cost - 21.0).abs() < 1e-9, "{:?}", sol);
        assert!((sol.flow[0] - 8.0).abs() < 1e-9);
        assert!((sol.flow[3] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn respects_lower_bounds() {
        let supply = [10.0, -10.0];
        let arcs = [arc(0, 1, 0.0, 10.0, 1.0), arc(0, 1, 4.0, 10.0, 5.0)];
        let sol = min_cost_flow(2, &supply, &arcs).unwrap();
        assert!((sol.flow[1] - 4.0).abs() < 1e-9);
        assert!((sol.cost - 26.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible() {
        let supply = [10.0, -10.0];
        let arcs = [arc(0, 1, 0.0, 6.0, 1.0)];
        assert_eq!(min_cost_flow(2, &supply, &arcs).unwrap_err(), NetworkError::Infeasible);
        let arcs = [arc(0, 1, 7.0, 6.0, 1.0)];
        assert_eq!(min_cost_flow(2, &supply, &arcs).unwrap_err(), NetworkError::BadInput);
    }

    #[test]
    fn negative_cycle_saturates() {
        // circulation: 0 -> 1 -> 0 with negative total cost, bounded by 3
        let arcs = [arc(0, 1, 0.0, 3.0, -5.0), arc(1, 0, 0.0, 100.0, 1.0)];
        let sol = min_cost_flow(2, &[0.0, 0.0], &arcs).unwrap();
        assert!((sol.cost + 12.0).abs() < 1e-9);
    }

    #[test]
    fn brute_force_agreement_on_small_grids() {
        // 2x2 transport with integral caps, enumerate all integral flows
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let s = [rng.random_range(0..6) as f64, rng.random_range(0..6) as f64];
            let d = [rng.random_range(0..6) as f64, rng.random_range(0..6) as f64];
            let c: Vec<f64> = (0..4).map(|_| -(rng.random_range(0..20) as f64)).collect();
            // source 4, sink 5, offers 0,1 orders 2,3; return arc makes it a circulation
            let mut arcs = vec![
                arc(4, 0, 0.0, s[0], 0.0),
                arc(4, 1, 0.0, s[1], 0.0),
                arc(2, 5, 0.0, d[0], 0.0),
                arc(3, 5, 0.0, d[1], 0.0),
                arc(5, 4, 0.0, 100.0, 0.0),
            ];
            for (k, (i, j)) in [(0, 2), (0, 3), (1, 2), (1, 3)].into_iter().enumerate() {
                arcs.push(arc(i, j, 0.0, 10.0, c[k]));
            }
            let sol = min_cost_flow(6, &[0.0; 6], &arcs).unwrap();
            let mut best = 0.0f64;
            for a in 0..6 {
                for b in 0..6 {
                    for cc in 0..6 {
                        for dd in 0..6 {
                            let (a, b, cc, dd) = (a as f64, b as f64, cc as f64, dd as f64);
                            if a + b <= s[0] && cc + dd <= s[1] && a + cc <= d[0] && b + dd <= d[1] {
                                best = best.min(a * c[0] + b * c[1] + cc * c[2] + dd * c[3]);
                            }
                        }
                    }
                }
            }
            assert!((sol.cost - best).abs() < 1e-9, "{} vs {}", sol.cost, best);
        }
    }
}
