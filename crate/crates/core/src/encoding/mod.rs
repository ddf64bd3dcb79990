//! Bipartite constraint/variable graph observed by the learned policy.
//!
//! Constraint features (`C`, 5 columns): objective cosine similarity, bias,
//! tightness, dual of the row-normalized constraint, age. Edge feature (`E`,
//! 1 column): the row-normalized coefficient. Variable features (`V`, 19
//! columns): type one-hot (binary, integer, implied integer, continuous),
//! objective coefficient, has lower/upper bound, solution at lower/upper
//! bound, fractionality, basis status one-hot (lower, basic, upper, zero),
//! reduced cost, age, solution value, incumbent value and mean incumbent value.

use crate::bnb::{is_tight, BranchingContext, SolverState};
use crate::instances::MilpInstance;
use crate::simplex::{LpSolution, VarStatus};

pub const CONS_FEATS: usize = 5;
pub const EDGE_FEATS: usize = 1;
pub const VAR_FEATS: usize = 19;

/// Tolerance for the at-bound indicators.
const AT_BOUND_TOL: f64 = 1e-9;

pub mod var_feature {
    pub const TYPE_BINARY: usize = 0;
    pub const TYPE_INTEGER: usize = 1;
    pub const TYPE_IMPLIED_INTEGER: usize = 2;
    pub const TYPE_CONTINUOUS: usize = 3;
    pub const COEF: usize = 4;
    pub const HAS_LB: usize = 5;
    pub const HAS_UB: usize = 6;
    pub const AT_LB: usize = 7;
    pub const AT_UB: usize = 8;
    pub const FRAC: usize = 9;
    pub const BASIS_LOWER: usize = 10;
    pub const BASIS_BASIC: usize = 11;
    pub const BASIS_UPPER: usize = 12;
    pub const BASIS_ZERO: usize = 13;
    pub const REDUCED_COST: usize = 14;
    pub const AGE: usize = 15;
    pub const SOL_VAL: usize = 16;
    pub const INC_VAL: usize = 17;
    pub const AVG_INC_VAL: usize = 18;
}

pub mod cons_feature {
    pub const OBJ_COS_SIM: usize = 0;
    pub const BIAS: usize = 1;
    pub const IS_TIGHT: usize = 2;
    pub const DUAL: usize = 3;
    pub const AGE: usize = 4;
}

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteState {
    pub m: usize,
    pub n: usize,
    /// Row-major `m x CONS_FEATS`.
    pub cons_feats: Vec<f64>,
    pub edge_rows: Vec<usize>,
    pub edge_cols: Vec<usize>,
    /// One entry per edge (`EDGE_FEATS == 1`).
    pub edge_feats: Vec<f64>,
    /// Row-major `n x VAR_FEATS`.
    pub var_feats: Vec<f64>,
    pub candidate_mask: Vec<bool>,
}

impl BipartiteState {
    pub fn n_edges(&self) -> usize {
        self.edge_rows.len()
    }

    pub fn cons_row(&self, i: usize) -> &[f64] {
        &self.cons_feats[i * CONS_FEATS..(i + 1) * CONS_FEATS]
    }

    pub fn var_row(&self, j: usize) -> &[f64] {
        &self.var_feats[j * VAR_FEATS..(j + 1) * VAR_FEATS]
    }

    pub fn candidates(&self) -> Vec<usize> {
        (0..self.n).filter(|&j| self.candidate_mask[j]).collect()
    }

    /// Checks shapes and index ranges.
    pub fn validate(&self) -> Result<(), String> {
        let e = self.edge_rows.len();
        if self.cons_feats.len() != self.m * CONS_FEATS
            || self.var_feats.len() != self.n * VAR_FEATS
            || self.edge_cols.len() != e
            || self.edge_feats.len() != e * EDGE_FEATS
            || self.candidate_mask.len() != self.n
        {
            return Err("feature arrays do not match the declared sizes".into());
        }
        if self.edge_rows.iter().any(|&i| i >= self.m)
            || self.edge_cols.iter().any(|&j| j >= self.n)
        {
            return Err("edge endpoint out of range".into());
        }
        if !self.candidate_mask.iter().any(|&b| b) {
            return Err("no candidate variable".into());
        }
        Ok(())
    }
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|a| a * a).sum::<f64>().sqrt()
}

fn guard(d: f64) -> f64 {
    if d > 0.0 {
        d
    } else {
        1.0
    }
}

/// Observation at a branching decision.
pub fn extract(ctx: &BranchingContext<'_>) -> BipartiteState {
    extract_parts(ctx.instance, ctx.lp(), ctx.state, ctx.candidates)
}

/// Observation built from its parts; `lp` carries the node-local bounds.
pub fn extract_parts(
    inst: &MilpInstance,
    lp: &LpSolution,
    state: &SolverState,
    candidates: &[usize],
) -> BipartiteState {
    let n = inst.n_vars();
    let m = inst.n_cons();
    let c_norm = norm(inst.objective.iter().copied());
    let c_div = guard(c_norm);
    let age_div = 1.0 + state.lp_count as f64;

    let mut cons_feats = Vec::with_capacity(m * CONS_FEATS);
    let nnz = inst.nnz();
    let mut edge_rows = Vec::with_capacity(nnz);
    let mut edge_cols = Vec::with_capacity(nnz);
    let mut edge_feats = Vec::with_capacity(nnz);
    for i in 0..m {
        let row_norm = guard(norm(inst.rows.row(i).map(|(_, a)| a)));
        let dot: f64 = inst.rows.row(i).map(|(j, a)| a * inst.objective[j]).sum();
        cons_feats.push(dot / (row_norm * c_div));
        cons_feats.push(inst.rhs[i] / row_norm);
        cons_feats.push(if is_tight(lp.activity[i], inst.rhs[i]) {
            1.0
        } else {
            0.0
        });
        cons_feats.push(lp.duals[i] * row_norm / c_norm.max(1.0));
        cons_feats.push(state.row_age[i] as f64 / age_div);
        for (j, a) in inst.rows.row(i) {
            edge_rows.push(i);
            edge_cols.push(j);
            edge_feats.push(a / row_norm);
        }
    }

    use var_feature::*;
    let incumbent = state.incumbent.as_ref().map(|(x, _)| x);
    let mut var_feats = vec![0.0; n * VAR_FEATS];
    for j in 0..n {
        let f = &mut var_feats[j * VAR_FEATS..(j + 1) * VAR_FEATS];
        let ty = if !inst.is_integer[j] {
            TYPE_CONTINUOUS
        } else if inst.lower[j] == 0.0 && inst.upper[j] == 1.0 {
            TYPE_BINARY
        } else {
            TYPE_INTEGER
        };
        f[ty] = 1.0;
        f[COEF] = inst.objective[j] / c_div;
        let (l, u, x) = (lp.lower[j], lp.upper[j], lp.x[j]);
        f[HAS_LB] = if l.is_finite() { 1.0 } else { 0.0 };
        f[HAS_UB] = if u.is_finite() { 1.0 } else { 0.0 };
        f[AT_LB] = if l.is_finite() && (x - l).abs() <= AT_BOUND_TOL {
            1.0
        } else {
            0.0
        };
        f[AT_UB] = if u.is_finite() && (x - u).abs() <= AT_BOUND_TOL {
            1.0
        } else {
            0.0
        };
        if inst.is_integer[j] {
            let frac = x - x.floor();
            f[FRAC] = frac.min(1.0 - frac);
        }
        let basis = match lp.basis.status[j] {
            VarStatus::AtLower => BASIS_LOWER,
            VarStatus::Basic => BASIS_BASIC,
            VarStatus::AtUpper => BASIS_UPPER,
            VarStatus::FreeZero => BASIS_ZERO,
        };
        f[basis] = 1.0;
        f[REDUCED_COST] = lp.reduced_costs[j] / c_div;
        f[AGE] = state.col_age[j] as f64 / age_div;
        f[SOL_VAL] = x;
        f[INC_VAL] = incumbent.map_or(0.0, |inc| inc[j]);
        f[AVG_INC_VAL] = state.average_incumbent(j);
    }

    let mut candidate_mask = vec![false; n];
    for &j in candidates {
        candidate_mask[j] = true;
    }
    BipartiteState {
        m,
        n,
        cons_feats,
        edge_rows,
        edge_cols,
        edge_feats,
        var_feats,
        candidate_mask,
    }
}
