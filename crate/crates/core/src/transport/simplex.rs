//! Primal network simplex for the integer transportation problem.
//!
//! Nodes are the `m` sources, the `n` sinks and an artificial root. The
//! starting basis uses big-M artificial arcs `i → root` and `root → j`. The
//! spanning tree is kept strongly feasible (Cunningham's leaving-arc rule),
//! which rules out cycling on degenerate instances. Pricing is block search.

const NONE: usize = usize::MAX;

pub(crate) struct SimplexOutput {
    /// `(source, target, units)` with positive flow, sorted.
    pub flows: Vec<(usize, usize, i64)>,
    /// Feasible duals with `u_i + v_j ≤ C_ij`, equality on tree arcs.
    pub u: Vec<i64>,
    #[cfg_attr(not(test), allow(dead_code))]
    pub v: Vec<i64>,
    pub pivots: usize,
}

struct Tree {
    parent: Vec<usize>,
    pred_arc: Vec<usize>,
    /// The pred arc points from the node to its parent.
    dir_up: Vec<bool>,
    flow: Vec<i64>,
    depth: Vec<usize>,
    pot: Vec<i64>,
    first_child: Vec<usize>,
    next_sib: Vec<usize>,
    prev_sib: Vec<usize>,
}

impl Tree {
    fn detach(&mut self, v: usize) {
        let (p, nx) = (self.prev_sib[v], self.next_sib[v]);
        if p != NONE {
            self.next_sib[p] = nx;
        } else {
            let par = self.parent[v];
            self.first_child[par] = nx;
        }
        if nx != NONE {
            self.prev_sib[nx] = p;
        }
        self.next_sib[v] = NONE;
        self.prev_sib[v] = NONE;
    }

    fn attach(&mut self, v: usize, p: usize) {
        let f = self.first_child[p];
        self.next_sib[v] = f;
        self.prev_sib[v] = NONE;
        if f != NONE {
            self.prev_sib[f] = v;
        }
        self.first_child[p] = v;
        self.parent[v] = p;
    }
}

struct Network<'a> {
    m: usize,
    n: usize,
    cost: &'a [i64],
    big_m: i64,
}

impl Network<'_> {
    fn n_arcs(&self) -> usize {
        self.m * self.n + self.m + self.n
    }

    fn root(&self) -> usize {
        self.m + self.n
    }

    /// `(tail, head, cost)` of arc `a`.
    #[inline]
    fn arc(&self, a: usize) -> (usize, usize, i64) {
        let mn = self.m * self.n;
        if a < mn {
            (a / self.n, self.m + a % self.n, self.cost[a])
        } else if a < mn + self.m {
            (a - mn, self.root(), self.big_m)
        } else {
            (self.root(), self.m + (a - mn - self.m), self.big_m)
        }
    }
}

/// Solve `min Σ C_ij f_ij` subject to row sums `supply` and column sums
/// `demand` (equal totals, all positive).
pub(crate) fn network_simplex(m: usize, n: usize, cost: &[i64], supply: &[i64], demand: &[i64]) -> SimplexOutput {
    debug_assert_eq!(cost.len(), m * n);
    debug_assert_eq!(supply.iter().sum::<i64>(), demand.iter().sum::<i64>());
    let max_c = cost.iter().map(|c| c.abs()).max().unwrap_or(0);
    let big_m = (max_c + 1).saturating_mul((m + n + 1) as i64);
    let net = Network { m, n, cost, big_m };
    let nn = m + n + 1;
    let root = net.root();
    let mn = m * n;

    let mut t = Tree {
        parent: vec![NONE; nn],
        pred_arc: vec![NONE; nn],
        dir_up: vec![false; nn],
        flow: vec![0; nn],
        depth: vec![0; nn],
        pot: vec![0; nn],
        first_child: vec![NONE; nn],
        next_sib: vec![NONE; nn],
        prev_sib: vec![NONE; nn],
    };
    for i in 0..m {
        t.attach(i, root);
        t.pred_arc[i] = mn + i;
        t.dir_up[i] = true;
        t.flow[i] = supply[i];
        t.depth[i] = 1;
        t.pot[i] = -big_m;
    }
    for j in 0..n {
        let v = m + j;
        t.attach(v, root);
        t.pred_arc[v] = mn + m + j;
        t.dir_up[v] = false;
        t.flow[v] = demand[j];
        t.depth[v] = 1;
        t.pot[v] = big_m;
    }

    let n_arcs = net.n_arcs();
    let block = ((n_arcs as f64).sqrt() as usize).max(10).min(n_arcs);
    let mut next = 0usize;
    let mut pivots = 0usize;
    let mut stack: Vec<usize> = Vec::new();

    loop {
        // Block search for the most negative reduced cost.
        let mut best = NONE;
        let mut best_rc = 0i64;
        let mut scanned = 0usize;
        let mut in_block = 0usize;
        let mut a = next;
        while scanned < n_arcs {
            let (tl, hd, c) = net.arc(a);
            let rc = c + t.pot[tl] - t.pot[hd];
            if rc < best_rc {
                best_rc = rc;
                best = a;
            }
            scanned += 1;
            in_block += 1;
            a += 1;
            if a == n_arcs {
                a = 0;
            }
            if in_block == block {
                if best != NONE {
                    break;
                }
                in_block = 0;
            }
        }
        if best == NONE {
            break;
        }
        next = a;
        pivots += 1;

        let (k, l, _) = net.arc(best);
        // Apex of the pivot cycle.
        let (mut x, mut y) = (k, l);
        while x != y {
            if t.depth[x] >= t.depth[y] {
                x = t.parent[x];
            } else {
                y = t.parent[y];
            }
        }
        let join = x;

        // Leaving arc: last blocking arc along the cycle oriented with the
        // entering arc, starting from the apex.
        let mut delta = i64::MAX;
        let mut leave = NONE;
        let mut leave_on_k_side = true;
        let mut w = k;
        while w != join {
            if t.dir_up[w] && t.flow[w] < delta {
                delta = t.flow[w];
                leave = w;
            }
            w = t.parent[w];
        }
        w = l;
        while w != join {
            if !t.dir_up[w] && t.flow[w] <= delta {
                delta = t.flow[w];
                leave = w;
                leave_on_k_side = false;
            }
            w = t.parent[w];
        }
        debug_assert!(
            leave != NONE,
            "uncapacitated transportation problems have no unbounded cycles"
        );

        if delta > 0 {
            w = k;
            while w != join {
                t.flow[w] += if t.dir_up[w] { -delta } else { delta };
                w = t.parent[w];
            }
            w = l;
            while w != join {
                t.flow[w] += if t.dir_up[w] { delta } else { -delta };
                w = t.parent[w];
            }
        }

        // Re-hang the subtree cut off by the leaving arc.
        let (u_new, p_new, dir_new, shift) = if leave_on_k_side {
            (k, l, true, -best_rc)
        } else {
            (l, k, false, best_rc)
        };
        let mut child = u_new;
        let mut new_parent = p_new;
        let mut new_arc = best;
        let mut new_dir = dir_new;
        let mut new_flow = delta;
        loop {
            let old_parent = t.parent[child];
            let old_arc = t.pred_arc[child];
            let old_dir = t.dir_up[child];
            let old_flow = t.flow[child];
            t.detach(child);
            t.attach(child, new_parent);
            t.pred_arc[child] = new_arc;
            t.dir_up[child] = new_dir;
            t.flow[child] = new_flow;
            if child == leave {
                break;
            }
            new_parent = child;
            new_arc = old_arc;
            new_dir = !old_dir;
            new_flow = old_flow;
            child = old_parent;
        }

        // Potentials and depths over the moved subtree.
        stack.clear();
        stack.push(u_new);
        while let Some(v) = stack.pop() {
            t.pot[v] += shift;
            t.depth[v] = t.depth[t.parent[v]] + 1;
            let mut c = t.first_child[v];
            while c != NONE {
                stack.push(c);
                c = t.next_sib[c];
            }
        }
    }

    let mut flows = Vec::new();
    for v in 0..(m + n) {
        let a = t.pred_arc[v];
        if a < mn && t.flow[v] > 0 {
            flows.push((a / n, a % n, t.flow[v]));
        }
        debug_assert!(a < mn || t.flow[v] == 0, "artificial arc carries flow at optimum");
    }
    flows.sort_unstable();
    SimplexOutput {
        flows,
        u: (0..m).map(|i| -t.pot[i]).collect(),
        v: (0..n).map(|j| t.pot[m + j]).collect(),
        pivots,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn objective(out: &SimplexOutput, cost: &[i64], n: usize) -> i64 {
        out.flows.iter().map(|&(i, j, f)| f * cost[i * n + j]).sum()
    }

    #[test]
    fn two_by_two_prefers_identity() {
        let cost = [0, 1, 1, 0];
        let out = network_simplex(2, 2, &cost, &[1, 1], &[1, 1]);
        assert_eq!(out.flows, vec![(0, 0, 1), (1, 1, 1)]);
    }

    #[test]
    fn duals_certify_optimality() {
        let (m, n) = (3, 4);
        let cost = [4, 1, 7, 3, 2, 9, 5, 1, 6, 2, 2, 8];
        let supply = [5, 3, 4];
        let demand = [2, 4, 3, 3];
        let out = network_simplex(m, n, &cost, &supply, &demand);
        for i in 0..m {
            for j in 0..n {
                assert!(out.u[i] + out.v[j] <= cost[i * n + j]);
            }
        }
        for &(i, j, _) in &out.flows {
            assert_eq!(out.u[i] + out.v[j], cost[i * n + j]);
        }
        let dual: i64 =
            (0..m).map(|i| supply[i] * out.u[i]).sum::<i64>() + (0..n).map(|j| demand[j] * out.v[j]).sum::<i64>();
        assert_eq!(dual, objective(&out, &cost, n));
        for i in 0..m {
            let row: i64 = out.flows.iter().filter(|f| f.0 == i).map(|f| f.2).sum();
            assert_eq!(row, supply[i]);
        }
    }

    #[test]
    fn degenerate_assignment_terminates() {
        let n = 30;
        let cost: Vec<i64> = (0..n * n).map(|a| ((a / n) as i64 - (a % n) as i64).pow(2)).collect();
        let ones = vec![1; n];
        let out = network_simplex(n, n, &cost, &ones, &ones);
        assert_eq!(objective(&out, &cost, n), 0);
    }
}
