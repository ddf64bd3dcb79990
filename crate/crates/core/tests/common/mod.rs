#![allow(dead_code, clippy::needless_range_loop)]

use branchlab::instances::{CflLayout, Family, GeneratorParams, MilpInstance, RngSeed};
use branchlab::policies::{
    BranchingPolicy, FsbPolicy, PseudocostPolicy, RandomPolicy, ReliabilityPolicy,
};

/// A generated instance with the parameters that produced it.
pub struct Tiny {
    pub params: GeneratorParams,
    pub inst: MilpInstance,
}

/// Small instances of `family` with at most 12 binary variables.
pub fn tiny_params(family: Family, k: usize) -> GeneratorParams {
    match family {
        Family::SetCover => GeneratorParams::SetCover {
            rows: 5 + k % 4,
            cols: 9 + k % 4,
            density: 0.25,
            max_cost: 100,
        },
        Family::Cauction => GeneratorParams::Cauction {
            items: 4 + k % 3,
            bids: 8 + k % 5,
        },
        Family::Cfl => GeneratorParams::Cfl {
            customers: 3 + k % 3,
            facilities: 2 + k % 3,
            ratio: 2.0 + (k % 3) as f64,
        },
        Family::Indset => GeneratorParams::Indset {
            nodes: 7 + k % 6,
            affinity: 2 + k % 2,
        },
    }
}

pub fn tiny_instances(per_family: usize, base_seed: u64) -> Vec<Tiny> {
    let mut out = Vec::new();
    for family in Family::ALL {
        for k in 0..per_family {
            let params = tiny_params(family, k);
            let inst = params
                .generate(RngSeed(base_seed + k as u64))
                .expect("tiny instance generates");
            assert!(inst.is_integer.iter().filter(|&&b| b).count() <= 12);
            out.push(Tiny { params, inst });
        }
    }
    out
}

/// Exhaustive optimum of an all-binary instance; `None` when infeasible.
pub fn enumerate_binary(inst: &MilpInstance) -> Option<f64> {
    enumerate_binary_within(inst, &inst.lower, &inst.upper)
}

/// Exhaustive optimum over binary points inside the given bounds.
pub fn enumerate_binary_within(inst: &MilpInstance, lower: &[f64], upper: &[f64]) -> Option<f64> {
    let n = inst.n_vars();
    assert!(n <= 20 && inst.is_integer.iter().all(|&b| b));
    let mut best: Option<f64> = None;
    let mut x = vec![0.0; n];
    for mask in 0u32..(1 << n) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = ((mask >> j) & 1) as f64;
        }
        if x.iter()
            .enumerate()
            .any(|(j, &v)| v < lower[j] || v > upper[j])
        {
            continue;
        }
        if inst.is_feasible(&x, 1e-9) {
            let val = inst.objective_value(&x);
            if best.is_none_or(|b| val < b) {
                best = Some(val);
            }
        }
    }
    best
}

/// Minimum-cost flow by successive shortest paths (Bellman-Ford) on a small graph.
struct Flow {
    n: usize,
    to: Vec<usize>,
    cap: Vec<f64>,
    cost: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

impl Flow {
    fn new(n: usize) -> Self {
        Self {
            n,
            to: Vec::new(),
            cap: Vec::new(),
            cost: Vec::new(),
            adj: vec![Vec::new(); n],
        }
    }

    fn edge(&mut self, u: usize, v: usize, cap: f64, cost: f64) {
        for (a, b, c, w) in [(u, v, cap, cost), (v, u, 0.0, -cost)] {
            self.adj[a].push(self.to.len());
            self.to.push(b);
            self.cap.push(c);
            self.cost.push(w);
        }
    }

    /// Sends up to `want` units; returns (flow, cost).
    fn run(&mut self, s: usize, t: usize, want: f64) -> (f64, f64) {
        let (mut flow, mut total) = (0.0, 0.0);
        while flow < want - 1e-12 {
            let mut dist = vec![f64::INFINITY; self.n];
            let mut via = vec![usize::MAX; self.n];
            dist[s] = 0.0;
            for _ in 0..self.n {
                let mut changed = false;
                for u in 0..self.n {
                    if dist[u].is_infinite() {
                        continue;
                    }
                    for &e in &self.adj[u] {
                        let v = self.to[e];
                        if self.cap[e] > 1e-12 && dist[u] + self.cost[e] < dist[v] - 1e-15 {
                            dist[v] = dist[u] + self.cost[e];
                            via[v] = e;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if dist[t].is_infinite() {
                break;
            }
            let mut push = want - flow;
            let mut v = t;
            while v != s {
                let e = via[v];
                push = push.min(self.cap[e]);
                v = self.to[e ^ 1];
            }
            let mut v = t;
            while v != s {
                let e = via[v];
                self.cap[e] -= push;
                self.cap[e ^ 1] += push;
                v = self.to[e ^ 1];
            }
            flow += push;
            total += push * dist[t];
        }
        (flow, total)
    }
}

/// Exhaustive optimum of a facility-location instance: every open set, each
/// completed by an optimal transportation flow.
pub fn enumerate_cfl(inst: &MilpInstance, customers: usize, facilities: usize) -> Option<f64> {
    let layout = CflLayout {
        customers,
        facilities,
    };
    let mut demand = vec![0.0; customers];
    let mut capacity = vec![0.0; facilities];
    for k in 0..facilities {
        for (j, a) in inst.rows.row(2 * customers + k) {
            if j == layout.open(k) {
                capacity[k] = -a;
            } else {
                demand[(j - facilities) / facilities] = a;
            }
        }
    }
    let total_demand: f64 = demand.iter().sum();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << facilities) {
        let (s, t) = (0, 1 + customers + facilities);
        let mut g = Flow::new(t + 1);
        let mut fixed = 0.0;
        for j in 0..customers {
            g.edge(s, 1 + j, demand[j], 0.0);
        }
        for k in 0..facilities {
            if (mask >> k) & 1 == 1 {
                fixed += inst.objective[layout.open(k)];
                g.edge(1 + customers + k, t, capacity[k], 0.0);
                for j in 0..customers {
                    let per_unit = inst.objective[layout.serve(j, k)] / demand[j];
                    g.edge(1 + j, 1 + customers + k, demand[j], per_unit);
                }
            }
        }
        let (flow, cost) = g.run(s, t, total_demand);
        if flow >= total_demand - 1e-9 {
            let val = fixed + cost;
            if best.is_none_or(|b| val < b) {
                best = Some(val);
            }
        }
    }
    best
}

/// Exhaustive optimum of any tiny generated instance.
pub fn oracle(t: &Tiny) -> Option<f64> {
    match t.params {
        GeneratorParams::Cfl {
            customers,
            facilities,
            ..
        } => enumerate_cfl(&t.inst, customers, facilities),
        _ => enumerate_binary(&t.inst),
    }
}

pub fn classic_policies(seed: u64) -> Vec<Box<dyn BranchingPolicy>> {
    vec![
        Box::new(RandomPolicy::new(RngSeed(seed))),
        Box::new(FsbPolicy),
        Box::new(PseudocostPolicy),
        Box::new(ReliabilityPolicy::default()),
    ]
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// A random bipartite observation with every variable and constraint touched by an edge.
pub fn random_state(
    rng: &mut impl rand::Rng,
    m: usize,
    n: usize,
) -> branchlab::encoding::BipartiteState {
    use branchlab::encoding::{BipartiteState, CONS_FEATS, VAR_FEATS};
    let mut pairs = std::collections::BTreeSet::new();
    for i in 0..m {
        pairs.insert((i, rng.gen_range(0..n)));
    }
    for j in 0..n {
        pairs.insert((rng.gen_range(0..m), j));
    }
    for _ in 0..(m * n) / 4 {
        pairs.insert((rng.gen_range(0..m), rng.gen_range(0..n)));
    }
    let mut mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
    mask[rng.gen_range(0..n)] = true;
    BipartiteState {
        m,
        n,
        cons_feats: (0..m * CONS_FEATS)
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect(),
        edge_rows: pairs.iter().map(|p| p.0).collect(),
        edge_cols: pairs.iter().map(|p| p.1).collect(),
        edge_feats: (0..pairs.len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        var_feats: (0..n * VAR_FEATS)
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect(),
        candidate_mask: mask,
    }
}

/// Relabels a state: new constraint `i` is old `pr[i]`, new variable `j` is old `pc[j]`;
/// edges are listed in the order `pe`.
pub fn permute_state(
    s: &branchlab::encoding::BipartiteState,
    pr: &[usize],
    pc: &[usize],
    pe: &[usize],
) -> branchlab::encoding::BipartiteState {
    let inv = |p: &[usize]| {
        let mut v = vec![0; p.len()];
        for (new, &old) in p.iter().enumerate() {
            v[old] = new;
        }
        v
    };
    let (inv_r, inv_c) = (inv(pr), inv(pc));
    branchlab::encoding::BipartiteState {
        m: s.m,
        n: s.n,
        cons_feats: pr.iter().flat_map(|&i| s.cons_row(i).to_vec()).collect(),
        edge_rows: pe.iter().map(|&k| inv_r[s.edge_rows[k]]).collect(),
        edge_cols: pe.iter().map(|&k| inv_c[s.edge_cols[k]]).collect(),
        edge_feats: pe.iter().map(|&k| s.edge_feats[k]).collect(),
        var_feats: pc.iter().flat_map(|&j| s.var_row(j).to_vec()).collect(),
        candidate_mask: pc.iter().map(|&j| s.candidate_mask[j]).collect(),
    }
}

/// Glorot weights plus non-trivial prenorm shifts and scales in prenorm mode.
pub fn random_params(
    mode: branchlab::gcnn::ConvMode,
    hidden: usize,
    seed: u64,
) -> branchlab::gcnn::GcnnParams {
    use rand::Rng;
    let mut p = branchlab::gcnn::GcnnParams::new(mode, hidden, seed);
    if mode == branchlab::gcnn::ConvMode::SumPrenorm {
        let mut rng = RngSeed(seed).derive(7).rng();
        for pre in [&mut p.pre_c, &mut p.pre_v] {
            pre.beta = (0..hidden).map(|_| rng.gen_range(-1.0..1.0)).collect();
            pre.sigma = (0..hidden).map(|_| rng.gen_range(0.5..3.0)).collect();
            pre.frozen = true;
        }
    }
    p
}

/// Solves the square system `a x = b` by Gaussian elimination; `None` if singular.
pub fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))?;
        if a[p][k].abs() < 1e-10 {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

pub fn subsets(total: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, total: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..total {
            cur.push(i);
            rec(i + 1, total, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, total, k, &mut Vec::new(), &mut out);
    out
}

/// Optimal value of a bounded LP by enumerating every vertex; `None` if infeasible.
pub fn vertex_oracle(inst: &MilpInstance, lower: &[f64], upper: &[f64]) -> Option<f64> {
    let n = inst.n_vars();
    let m = inst.n_cons();
    // Constraint k < m is row k; then lower bounds, then upper bounds.
    let mut dense = vec![vec![0.0; n]; m];
    for (i, row) in dense.iter_mut().enumerate() {
        for (j, a) in inst.rows.row(i) {
            row[j] = a;
        }
    }
    let constraint = |k: usize| -> (Vec<f64>, f64) {
        if k < m {
            (dense[k].clone(), inst.rhs[k])
        } else {
            let j = (k - m) % n;
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            (e, if k - m < n { lower[j] } else { upper[j] })
        }
    };
    let mut best: Option<f64> = None;
    for set in subsets(m + 2 * n, n) {
        let (a, b): (Vec<_>, Vec<_>) = set.iter().map(|&k| constraint(k)).unzip();
        let Some(x) = solve_square(a, b) else {
            continue;
        };
        let feasible = (0..n).all(|j| x[j] >= lower[j] - 1e-7 && x[j] <= upper[j] + 1e-7)
            && (0..m).all(|i| {
                let act: f64 = (0..n).map(|j| dense[i][j] * x[j]).sum();
                act <= inst.rhs[i] + 1e-7
            });
        if feasible {
            let obj = inst.objective_value(&x);
            best = Some(best.map_or(obj, |b: f64| b.min(obj)));
        }
    }
    best
}
