//! Bounded-variable revised simplex for LP relaxations, with warm-started
//! re-solves after bound changes.
//!
//! Every row `a_i x <= b_i` gets a slack `s_i >= 0`, so the working problem is
//! `min c'x  s.t.  Ax + s = b,  l <= x <= u,  s >= 0` over `n + m` columns.
//! Cold solves start from the slack basis with dual simplex whenever that basis
//! can be made dual feasible (all structurals boxed or sign-compatible), and fall
//! back to a composite primal simplex otherwise. Re-solves reuse the parent basis
//! and, when available, its factorization.

mod factor;
mod solver;

use std::sync::Arc;

use thiserror::Error;

use crate::instances::MilpInstance;

pub(crate) use factor::Factor;

/// Primal feasibility tolerance (scaled by `1 + |bound|`).
pub const PRIMAL_TOL: f64 = 1e-9;
/// Reduced-cost optimality tolerance.
pub const DUAL_TOL: f64 = 1e-7;
/// Smallest pivot element accepted by the ratio tests.
pub const PIVOT_TOL: f64 = 1e-9;
/// Distance to the nearest integer above which a value counts as fractional.
pub const INTEGRALITY_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("bound override for variable {var} is invalid: [{lower}, {upper}]")]
    InvalidOverride { var: usize, lower: f64, upper: f64 },
    #[error("parent LP is not optimal ({0:?})")]
    ParentNotOptimal(LpStatus),
    #[error("variable {var} has integral value {value} and cannot be probed")]
    NotFractional { var: usize, value: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable resting at zero.
    FreeZero,
}

/// Basis status of the `n` structural columns followed by the `m` slacks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub status: Vec<VarStatus>,
}

impl Basis {
    pub fn n_basic(&self) -> usize {
        self.status
            .iter()
            .filter(|&&s| s == VarStatus::Basic)
            .count()
    }
}

/// Per-solve counters exposed to the benchmarking code.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LpStats {
    pub refactorizations: usize,
    pub bland_restarts: usize,
    pub primal_fallbacks: usize,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural values.
    pub x: Vec<f64>,
    /// Row activities `Ax`.
    pub activity: Vec<f64>,
    pub objective: f64,
    /// Row duals `y = B^-T c_B` (nonpositive for `<=` rows at optimality).
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub basis: Basis,
    pub iterations: usize,
    pub stats: LpStats,
    /// Structural bounds this LP was solved under.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub(crate) factor: Option<Arc<Factor>>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Drops the cached factorization (e.g. before parking the node in a queue).
    pub fn release_factor(&mut self) {
        self.factor = None;
    }

    pub fn has_factor(&self) -> bool {
        self.factor.is_some()
    }
}

/// Bound changes applied on top of a parent LP.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundsOverride {
    pub entries: Vec<(usize, f64, f64)>,
}

impl BoundsOverride {
    pub fn single(var: usize, lower: f64, upper: f64) -> Self {
        Self {
            entries: vec![(var, lower, upper)],
        }
    }

    fn validate(&self, n: usize) -> Result<(), LpError> {
        let mut seen = std::collections::BTreeSet::new();
        for &(var, lower, upper) in &self.entries {
            if var >= n
                || !seen.insert(var)
                || lower.is_nan()
                || upper.is_nan()
                || lower > upper
                || lower == f64::INFINITY
                || upper == f64::NEG_INFINITY
            {
                return Err(LpError::InvalidOverride { var, lower, upper });
            }
        }
        Ok(())
    }
}

/// Iteration and refactorization knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexConfig {
    /// Iteration cap per attempt is `cap_factor * (n + m)`.
    pub cap_factor: usize,
    /// Switch to Bland's rule after `stall_factor * (n + m)` non-improving pivots.
    pub stall_factor: usize,
    pub refactor_interval: usize,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        Self {
            cap_factor: 20,
            stall_factor: 5,
            refactor_interval: 50,
        }
    }
}

/// Column-oriented copy of an instance prepared for repeated LP solves.
/// Immutable once built, so one model can serve many concurrent solves.
#[derive(Debug, Clone)]
pub struct LpModel {
    n: usize,
    m: usize,
    cost: Vec<f64>,
    rhs: Vec<f64>,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    config: SimplexConfig,
}

impl LpModel {
    pub fn new(inst: &MilpInstance) -> Self {
        Self::with_config(inst, SimplexConfig::default())
    }

    pub fn with_config(inst: &MilpInstance, config: SimplexConfig) -> Self {
        let n = inst.n_vars();
        let m = inst.n_cons();
        let mut counts = vec![0usize; n + 1];
        for &j in &inst.rows.cols {
            counts[j + 1] += 1;
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_start = counts.clone();
        let mut next = counts;
        let mut col_row = vec![0; inst.nnz()];
        let mut col_val = vec![0.0; inst.nnz()];
        for i in 0..m {
            for (j, a) in inst.rows.row(i) {
                col_row[next[j]] = i;
                col_val[next[j]] = a;
                next[j] += 1;
            }
        }
        Self {
            n,
            m,
            cost: inst.objective.clone(),
            rhs: inst.rhs.clone(),
            col_start,
            col_row,
            col_val,
            lower: inst.lower.clone(),
            upper: inst.upper.clone(),
            config,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn n_cons(&self) -> usize {
        self.m
    }

    pub fn root_lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn root_upper(&self) -> &[f64] {
        &self.upper
    }

    /// Solves the relaxation under the instance's own bounds.
    pub fn solve_root(&self) -> LpSolution {
        solver::solve_cold(self, self.lower.clone(), self.upper.clone())
    }

    /// Solves from scratch (slack basis) under explicit structural bounds.
    pub fn solve_with_bounds(&self, lower: &[f64], upper: &[f64]) -> Result<LpSolution, LpError> {
        if lower.len() != self.n || upper.len() != self.n {
            return Err(LpError::Dimension(format!(
                "bounds have length {}/{} for {} variables",
                lower.len(),
                upper.len(),
                self.n
            )));
        }
        Ok(solver::solve_cold(self, lower.to_vec(), upper.to_vec()))
    }

    /// Re-solves `parent` after applying `delta`, warm-starting from its basis.
    pub fn resolve(
        &self,
        parent: &LpSolution,
        delta: &BoundsOverride,
    ) -> Result<LpSolution, LpError> {
        if !parent.is_optimal() {
            return Err(LpError::ParentNotOptimal(parent.status));
        }
        if parent.x.len() != self.n || parent.basis.status.len() != self.n + self.m {
            return Err(LpError::Dimension(
                "parent solution does not match the model".into(),
            ));
        }
        delta.validate(self.n)?;
        let mut lower = parent.lower.clone();
        let mut upper = parent.upper.clone();
        for &(j, l, u) in &delta.entries {
            lower[j] = l;
            upper[j] = u;
        }
        Ok(solver::solve_warm(self, parent, lower, upper))
    }

    /// Solves both children of the split `x_var <= floor_val` / `x_var >= ceil_val`.
    pub fn strong_branch_probe(
        &self,
        parent: &LpSolution,
        var: usize,
        floor_val: f64,
        ceil_val: f64,
    ) -> Result<(LpSolution, LpSolution), LpError> {
        if !parent.is_optimal() {
            return Err(LpError::ParentNotOptimal(parent.status));
        }
        let value = *parent
            .x
            .get(var)
            .ok_or_else(|| LpError::Dimension(format!("variable {var} out of range")))?;
        if (value - value.round()).abs() <= INTEGRALITY_TOL {
            return Err(LpError::NotFractional { var, value });
        }
        let (l, u) = (parent.lower[var], parent.upper[var]);
        let down = self.resolve(parent, &BoundsOverride::single(var, l, floor_val.max(l)))?;
        let up = self.resolve(parent, &BoundsOverride::single(var, ceil_val.min(u), u))?;
        Ok((down, up))
    }

    /// Attaches a fresh factorization of the solution's basis so that subsequent
    /// re-solves from it skip the refactorization.
    pub fn attach_factor(&self, sol: &mut LpSolution) {
        if sol.factor.is_none() && sol.is_optimal() {
            sol.factor = solver::factor_basis(self, &sol.basis).map(Arc::new);
        }
    }

    fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = if j < self.n {
            self.col_start[j]..self.col_start[j + 1]
        } else {
            0..0
        };
        let slack = (j >= self.n).then(|| (j - self.n, 1.0));
        self.col_row[span.clone()]
            .iter()
            .copied()
            .zip(self.col_val[span].iter().copied())
            .chain(slack)
    }

    fn cost_of(&self, j: usize) -> f64 {
        if j < self.n {
            self.cost[j]
        } else {
            0.0
        }
    }
}

/// Solves the LP relaxation of `inst`.
pub fn solve_root(inst: &MilpInstance) -> LpSolution {
    LpModel::new(inst).solve_root()
}

/// Warm-started re-solve of `parent` under `delta`.
pub fn resolve(
    inst: &MilpInstance,
    parent: &LpSolution,
    delta: &BoundsOverride,
) -> Result<LpSolution, LpError> {
    LpModel::new(inst).resolve(parent, delta)
}

/// Solves both strong-branching children of `var`.
pub fn strong_branch_probe(
    inst: &MilpInstance,
    parent: &LpSolution,
    var: usize,
    floor_val: f64,
    ceil_val: f64,
) -> Result<(LpSolution, LpSolution), LpError> {
    LpModel::new(inst).strong_branch_probe(parent, var, floor_val, ceil_val)
}
