use std::sync::Arc;

use super::factor::{Factor, Singular};
use super::{
    Basis, LpModel, LpSolution, LpStats, LpStatus, VarStatus, DUAL_TOL, PIVOT_TOL, PRIMAL_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    Singular,
}

#[derive(Clone)]
struct Work<'a> {
    model: &'a LpModel,
    n: usize,
    m: usize,
    lo: Vec<f64>,
    up: Vec<f64>,
    status: Vec<VarStatus>,
    x: Vec<f64>,
    factor: Factor,
    iterations: usize,
    attempt_iterations: usize,
    bland: bool,
    stall: usize,
    stats: LpStats,
}

fn feas_tol(bound: f64) -> f64 {
    PRIMAL_TOL * (1.0 + bound.abs())
}

fn resting_value(status: VarStatus, lo: f64, up: f64) -> f64 {
    match status {
        VarStatus::AtLower => lo,
        VarStatus::AtUpper => up,
        VarStatus::FreeZero | VarStatus::Basic => 0.0,
    }
}

/// Nonbasic resting place for a column that must be placed at a bound:
/// prefer the side the cost pushes toward, else any finite bound.
fn resting_status(cost: f64, lo: f64, up: f64) -> VarStatus {
    match (lo.is_finite(), up.is_finite()) {
        (true, true) => {
            if cost >= 0.0 {
                VarStatus::AtLower
            } else {
                VarStatus::AtUpper
            }
        }
        (true, false) => VarStatus::AtLower,
        (false, true) => VarStatus::AtUpper,
        (false, false) => VarStatus::FreeZero,
    }
}

fn extended_bounds(model: &LpModel, lower: &[f64], upper: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut lo = lower.to_vec();
    let mut up = upper.to_vec();
    lo.extend(std::iter::repeat_n(0.0, model.m));
    up.extend(std::iter::repeat_n(f64::INFINITY, model.m));
    (lo, up)
}

fn build_factor(model: &LpModel, head: Vec<usize>) -> Result<Factor, Singular> {
    Factor::new(model.m, head, |j, col| {
        for (i, a) in model.column(j) {
            col[i] = a;
        }
    })
}

pub(super) fn factor_basis(model: &LpModel, basis: &Basis) -> Option<Factor> {
    let head: Vec<usize> = (0..model.n + model.m)
        .filter(|&j| basis.status[j] == VarStatus::Basic)
        .collect();
    if head.len() != model.m {
        return None;
    }
    build_factor(model, head).ok()
}

fn slack_work<'a>(model: &'a LpModel, lower: &[f64], upper: &[f64]) -> Work<'a> {
    let (n, m) = (model.n, model.m);
    let (lo, up) = extended_bounds(model, lower, upper);
    let mut status = Vec::with_capacity(n + m);
    let mut x = Vec::with_capacity(n + m);
    for j in 0..n {
        let st = resting_status(model.cost[j], lo[j], up[j]);
        status.push(st);
        x.push(resting_value(st, lo[j], up[j]));
    }
    status.extend(std::iter::repeat_n(VarStatus::Basic, m));
    x.extend(std::iter::repeat_n(0.0, m));
    let head: Vec<usize> = (n..n + m).collect();
    let factor = build_factor(model, head).expect("slack basis is the identity");
    Work {
        model,
        n,
        m,
        lo,
        up,
        status,
        x,
        factor,
        iterations: 0,
        attempt_iterations: 0,
        bland: false,
        stall: 0,
        stats: LpStats::default(),
    }
}

pub(super) fn solve_cold(model: &LpModel, lower: Vec<f64>, upper: Vec<f64>) -> LpSolution {
    let work = slack_work(model, &lower, &upper);
    let (work, outcome) = run(work, &lower, &upper);
    work.finish(outcome, lower, upper)
}

pub(super) fn solve_warm(
    model: &LpModel,
    parent: &LpSolution,
    lower: Vec<f64>,
    upper: Vec<f64>,
) -> LpSolution {
    let (n, m) = (model.n, model.m);
    let (lo, up) = extended_bounds(model, &lower, &upper);
    let mut status = parent.basis.status.clone();
    let mut x = vec![0.0; n + m];
    for j in 0..n + m {
        if status[j] != VarStatus::Basic {
            let sits_on_infinite = match status[j] {
                VarStatus::AtLower => !lo[j].is_finite(),
                VarStatus::AtUpper => !up[j].is_finite(),
                VarStatus::FreeZero => lo[j].is_finite() || up[j].is_finite(),
                VarStatus::Basic => false,
            };
            if sits_on_infinite {
                status[j] = resting_status(model.cost_of(j), lo[j], up[j]);
            }
            x[j] = resting_value(status[j], lo[j], up[j]);
        }
    }
    let mut stats = LpStats::default();
    let factor = match &parent.factor {
        Some(f) => Some((**f).clone()),
        None => {
            stats.refactorizations += 1;
            factor_basis(
                model,
                &Basis {
                    status: status.clone(),
                },
            )
        }
    };
    let Some(factor) = factor else {
        return solve_cold(model, lower, upper);
    };
    let work = Work {
        model,
        n,
        m,
        lo,
        up,
        status,
        x,
        factor,
        iterations: 0,
        attempt_iterations: 0,
        bland: false,
        stall: 0,
        stats,
    };
    let (work, outcome) = run(work, &lower, &upper);
    work.finish(outcome, lower, upper)
}

/// Runs an attempt; on hitting the iteration cap retries once from the same start
/// under Bland's rule; on a singular basis retries from the slack basis.
fn run<'a>(work: Work<'a>, lower: &[f64], upper: &[f64]) -> (Work<'a>, Outcome) {
    let start = work.clone();
    let mut w = work;
    let outcome = w.attempt();
    match outcome {
        Outcome::IterationLimit => {
            let mut retry = start;
            retry.iterations = w.iterations;
            retry.stats = w.stats;
            retry.stats.bland_restarts += 1;
            retry.bland = true;
            let outcome = retry.attempt();
            (retry, outcome)
        }
        Outcome::Singular => {
            let mut cold = slack_work(w.model, lower, upper);
            cold.iterations = w.iterations;
            cold.stats = w.stats;
            cold.stats.bland_restarts += 1;
            cold.bland = true;
            let outcome = match cold.attempt() {
                Outcome::Singular => Outcome::IterationLimit,
                other => other,
            };
            (cold, outcome)
        }
        _ => (w, outcome),
    }
}

impl<'a> Work<'a> {
    fn cap(&self) -> usize {
        self.model.config.cap_factor * (self.n + self.m)
    }

    fn stall_limit(&self) -> usize {
        self.model.config.stall_factor * (self.n + self.m)
    }

    fn cost(&self, j: usize) -> f64 {
        self.model.cost_of(j)
    }

    fn dot_column(&self, v: &[f64], j: usize) -> f64 {
        self.model.column(j).map(|(i, a)| v[i] * a).sum()
    }

    fn refactor(&mut self) -> Result<(), Singular> {
        self.factor = build_factor(self.model, self.factor.head.clone())?;
        self.stats.refactorizations += 1;
        Ok(())
    }

    fn recompute_primal(&mut self) {
        let mut rhs = self.model.rhs.clone();
        for j in 0..self.n + self.m {
            if self.status[j] != VarStatus::Basic {
                let v = self.x[j];
                if v != 0.0 {
                    for (i, a) in self.model.column(j) {
                        rhs[i] -= a * v;
                    }
                }
            }
        }
        self.factor.ftran(&mut rhs);
        for (k, &j) in self.factor.head.iter().enumerate() {
            self.x[j] = rhs[k];
        }
    }

    /// `y = B^-T c_B` for the given basic costs.
    fn btran_costs(&self, basic_cost: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut y: Vec<f64> = self.factor.head.iter().map(|&j| basic_cost(j)).collect();
        self.factor.btran(&mut y);
        y
    }

    fn reduced_costs(&self, y: &[f64]) -> Vec<f64> {
        (0..self.n + self.m)
            .map(|j| {
                if self.status[j] == VarStatus::Basic {
                    0.0
                } else {
                    self.cost(j) - self.dot_column(y, j)
                }
            })
            .collect()
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lo[j] == self.up[j]
    }

    /// Flips boxed nonbasics whose reduced cost has the wrong sign; returns whether
    /// the basis is then dual feasible.
    fn make_dual_feasible(&mut self, d: &[f64]) -> bool {
        let mut feasible = true;
        let mut flipped = false;
        for j in 0..self.n + self.m {
            let wrong = match self.status[j] {
                VarStatus::Basic => false,
                _ if self.is_fixed(j) => false,
                VarStatus::AtLower => d[j] < -DUAL_TOL,
                VarStatus::AtUpper => d[j] > DUAL_TOL,
                VarStatus::FreeZero => d[j].abs() > DUAL_TOL,
            };
            if !wrong {
                continue;
            }
            if self.lo[j].is_finite() && self.up[j].is_finite() {
                self.status[j] = if d[j] < 0.0 {
                    VarStatus::AtUpper
                } else {
                    VarStatus::AtLower
                };
                self.x[j] = resting_value(self.status[j], self.lo[j], self.up[j]);
                flipped = true;
            } else {
                feasible = false;
            }
        }
        if flipped {
            self.recompute_primal();
        }
        feasible
    }

    fn dual_feasible(&self, d: &[f64]) -> bool {
        (0..self.n + self.m).all(|j| match self.status[j] {
            VarStatus::Basic => true,
            _ if self.is_fixed(j) => true,
            VarStatus::AtLower => d[j] >= -DUAL_TOL,
            VarStatus::AtUpper => d[j] <= DUAL_TOL,
            VarStatus::FreeZero => d[j].abs() <= DUAL_TOL,
        })
    }

    fn attempt(&mut self) -> Outcome {
        self.attempt_iterations = 0;
        self.stall = 0;
        self.recompute_primal();
        let y = self.btran_costs(|j| self.cost(j));
        let d = self.reduced_costs(&y);
        if self.make_dual_feasible(&d) {
            match self.dual_simplex() {
                Outcome::Optimal => {
                    let y = self.btran_costs(|j| self.cost(j));
                    let d = self.reduced_costs(&y);
                    if self.dual_feasible(&d) {
                        Outcome::Optimal
                    } else {
                        self.stats.primal_fallbacks += 1;
                        self.primal_simplex()
                    }
                }
                other => other,
            }
        } else {
            self.stats.primal_fallbacks += 1;
            self.primal_simplex()
        }
    }

    fn objective(&self) -> f64 {
        (0..self.n).map(|j| self.model.cost[j] * self.x[j]).sum()
    }

    fn note_progress(&mut self, before: f64, after: f64, minimize: bool) {
        let gained = if minimize {
            before - after
        } else {
            after - before
        };
        if gained > 1e-12 * (1.0 + before.abs()) {
            self.stall = 0;
        } else {
            self.stall += 1;
            if self.stall > self.stall_limit() {
                self.bland = true;
            }
        }
    }

    /// Refactorizes once the eta file is long; reports whether it did.
    fn maybe_refactor(&mut self) -> Result<bool, Singular> {
        if self.factor.eta_count() >= self.model.config.refactor_interval {
            self.refactor()?;
            self.recompute_primal();
            return Ok(true);
        }
        Ok(false)
    }

    /// Infeasibility of basic position `k` (positive below lower is reported as
    /// `(amount, true)`, above upper as `(amount, false)`).
    fn basic_violation(&self, j: usize) -> Option<(f64, bool)> {
        let v = self.x[j];
        if v < self.lo[j] - feas_tol(self.lo[j]) {
            Some((self.lo[j] - v, true))
        } else if v > self.up[j] + feas_tol(self.up[j]) {
            Some((v - self.up[j], false))
        } else {
            None
        }
    }

    fn dual_simplex(&mut self) -> Outcome {
        let (n, m) = (self.n, self.m);
        let mut verified = false;
        // Reduced costs, updated in place between refactorizations.
        let mut d: Option<Vec<f64>> = None;
        let mut alpha = vec![0.0; n + m];
        loop {
            if self.attempt_iterations >= self.cap() {
                return Outcome::IterationLimit;
            }
            match self.maybe_refactor() {
                Err(_) => return Outcome::Singular,
                Ok(true) => d = None,
                Ok(false) => {}
            }
            // Leaving row.
            let mut leave: Option<(usize, f64, bool)> = None;
            for (k, &j) in self.factor.head.iter().enumerate() {
                if let Some((amount, below)) = self.basic_violation(j) {
                    let better = match leave {
                        None => true,
                        Some((kk, best, _)) => {
                            let jj = self.factor.head[kk];
                            if self.bland {
                                j < jj
                            } else {
                                amount > best || (amount == best && j < jj)
                            }
                        }
                    };
                    if better {
                        leave = Some((k, amount, below));
                    }
                }
            }
            let Some((r, _, below)) = leave else {
                if verified {
                    return Outcome::Optimal;
                }
                self.recompute_primal();
                verified = true;
                continue;
            };
            let dv = d.get_or_insert_with(|| {
                let y = self.btran_costs(|j| self.cost(j));
                self.reduced_costs(&y)
            });
            let mut rho = vec![0.0; m];
            rho[r] = 1.0;
            self.factor.btran(&mut rho);
            let sgn = if below { -1.0 } else { 1.0 };

            // Harris two-pass ratio test over eligible nonbasic columns.
            let mut cands: Vec<(usize, f64, f64)> = Vec::new();
            let mut bound = f64::INFINITY;
            for j in 0..n + m {
                let st = self.status[j];
                if st == VarStatus::Basic {
                    continue;
                }
                let a = self.dot_column(&rho, j);
                alpha[j] = a;
                if self.is_fixed(j) {
                    continue;
                }
                let s = sgn * a;
                let dj = match st {
                    VarStatus::AtLower if s > PIVOT_TOL => dv[j].max(0.0),
                    VarStatus::AtUpper if s < -PIVOT_TOL => (-dv[j]).max(0.0),
                    VarStatus::FreeZero if a.abs() > PIVOT_TOL => dv[j].abs(),
                    _ => continue,
                };
                bound = bound.min((dj + DUAL_TOL) / a.abs());
                cands.push((j, a, dj));
            }
            let chosen = if self.bland {
                cands
                    .iter()
                    .map(|&(j, a, dj)| (j, a, dj / a.abs()))
                    .min_by(|x, y| x.2.total_cmp(&y.2).then(x.0.cmp(&y.0)))
                    .map(|(j, a, _)| (j, a))
            } else {
                cands
                    .iter()
                    .filter(|&&(_, a, dj)| dj / a.abs() <= bound)
                    .max_by(|x, y| x.1.abs().total_cmp(&y.1.abs()).then(y.0.cmp(&x.0)))
                    .map(|&(j, a, _)| (j, a))
            };
            let Some((q, alpha_q)) = chosen else {
                if self.factor.eta_count() > 0 && !verified {
                    if self.refactor().is_err() {
                        return Outcome::Singular;
                    }
                    self.recompute_primal();
                    d = None;
                    verified = true;
                    continue;
                }
                return Outcome::Infeasible;
            };
            let mut col = vec![0.0; m];
            for (i, a) in self.model.column(q) {
                col[i] = a;
            }
            self.factor.ftran(&mut col);
            if (col[r] - alpha_q).abs() > 1e-7 * (1.0 + alpha_q.abs())
                && self.factor.eta_count() > 0
            {
                if self.refactor().is_err() {
                    return Outcome::Singular;
                }
                self.recompute_primal();
                d = None;
                continue;
            }
            let before = self.objective();
            let leaving = self.factor.head[r];
            let theta_d = dv[q] / alpha_q;
            for j in 0..n + m {
                if self.status[j] != VarStatus::Basic {
                    dv[j] -= theta_d * alpha[j];
                }
            }
            dv[q] = 0.0;
            dv[leaving] = -theta_d;
            let target = if below {
                self.lo[leaving]
            } else {
                self.up[leaving]
            };
            let theta = (self.x[leaving] - target) / col[r];
            self.x[q] += theta;
            for (k, &j) in self.factor.head.iter().enumerate() {
                if col[k] != 0.0 {
                    self.x[j] -= theta * col[k];
                }
            }
            self.x[leaving] = target;
            self.status[leaving] = if below {
                VarStatus::AtLower
            } else {
                VarStatus::AtUpper
            };
            self.status[q] = VarStatus::Basic;
            self.factor.push_eta(r, q, &col);
            self.iterations += 1;
            self.attempt_iterations += 1;
            verified = false;
            let after = self.objective();
            self.note_progress(before, after, false);
        }
    }

    fn infeasibility_sum(&self) -> f64 {
        self.factor
            .head
            .iter()
            .filter_map(|&j| self.basic_violation(j).map(|v| v.0))
            .sum()
    }

    fn primal_simplex(&mut self) -> Outcome {
        let (n, m) = (self.n, self.m);
        let mut verified = false;
        loop {
            if self.attempt_iterations >= self.cap() {
                return Outcome::IterationLimit;
            }
            if self.maybe_refactor().is_err() {
                return Outcome::Singular;
            }
            let violations: Vec<Option<(f64, bool)>> = self
                .factor
                .head
                .iter()
                .map(|&j| self.basic_violation(j))
                .collect();
            let phase1 = violations.iter().any(Option::is_some);
            let y = if phase1 {
                let mut y: Vec<f64> = violations
                    .iter()
                    .map(|v| match v {
                        Some((_, true)) => -1.0,
                        Some((_, false)) => 1.0,
                        None => 0.0,
                    })
                    .collect();
                self.factor.btran(&mut y);
                y
            } else {
                self.btran_costs(|j| self.cost(j))
            };
            // Pricing.
            let mut enter: Option<(usize, f64, f64)> = None;
            for j in 0..n + m {
                let st = self.status[j];
                if st == VarStatus::Basic || self.is_fixed(j) {
                    continue;
                }
                let cj = if phase1 { 0.0 } else { self.cost(j) };
                let dj = cj - self.dot_column(&y, j);
                let dir = match st {
                    VarStatus::AtLower if dj < -DUAL_TOL => 1.0,
                    VarStatus::AtUpper if dj > DUAL_TOL => -1.0,
                    VarStatus::FreeZero if dj.abs() > DUAL_TOL => -dj.signum(),
                    _ => continue,
                };
                let better = match enter {
                    None => true,
                    Some((_, best, _)) => !self.bland && dj.abs() > best,
                };
                if better {
                    enter = Some((j, dj.abs(), dir));
                }
            }
            let Some((q, _, dir)) = enter else {
                if !verified {
                    self.recompute_primal();
                    verified = true;
                    continue;
                }
                return if phase1 {
                    Outcome::Infeasible
                } else {
                    Outcome::Optimal
                };
            };
            let mut col = vec![0.0; m];
            for (i, a) in self.model.column(q) {
                col[i] = a;
            }
            self.factor.ftran(&mut col);

            // Ratio test: (position, exact step, relaxed step, leaves at lower?).
            let mut rows: Vec<(usize, f64, f64, bool)> = Vec::new();
            for (k, &j) in self.factor.head.iter().enumerate() {
                let a = col[k];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let rate = -dir * a;
                let v = self.x[j];
                let (lo, up) = (self.lo[j], self.up[j]);
                if rate < 0.0 {
                    if v > up + feas_tol(up) {
                        let t = (v - up) / -rate;
                        rows.push((k, t, t, false));
                    } else if lo.is_finite() && v >= lo - feas_tol(lo) {
                        let t = ((v - lo) / -rate).max(0.0);
                        rows.push((k, t, (v - lo + feas_tol(lo)) / -rate, true));
                    }
                } else if v < lo - feas_tol(lo) {
                    let t = (lo - v) / rate;
                    rows.push((k, t, t, true));
                } else if up.is_finite() && v <= up + feas_tol(up) {
                    let t = ((up - v) / rate).max(0.0);
                    rows.push((k, t, (up - v + feas_tol(up)) / rate, false));
                }
            }
            let flip = self.up[q] - self.lo[q];
            let relaxed = rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
            let before = if phase1 {
                self.infeasibility_sum()
            } else {
                self.objective()
            };
            if flip.is_finite() && flip <= relaxed {
                let step = dir * flip;
                self.x[q] += step;
                for (k, &j) in self.factor.head.iter().enumerate() {
                    self.x[j] -= col[k] * step;
                }
                self.status[q] = if dir > 0.0 {
                    VarStatus::AtUpper
                } else {
                    VarStatus::AtLower
                };
                self.x[q] = resting_value(self.status[q], self.lo[q], self.up[q]);
            } else {
                let pick = if self.bland {
                    rows.iter()
                        .min_by(|a, b| {
                            a.1.total_cmp(&b.1)
                                .then(self.factor.head[a.0].cmp(&self.factor.head[b.0]))
                        })
                        .copied()
                } else {
                    rows.iter()
                        .filter(|r| r.1 <= relaxed)
                        .max_by(|a, b| {
                            col[a.0]
                                .abs()
                                .total_cmp(&col[b.0].abs())
                                .then(self.factor.head[b.0].cmp(&self.factor.head[a.0]))
                        })
                        .copied()
                };
                let Some((r, t, _, at_lower)) = pick else {
                    return if phase1 {
                        // A phase-one direction is always blocked; treat as numerical trouble.
                        Outcome::Singular
                    } else {
                        Outcome::Unbounded
                    };
                };
                let step = dir * t;
                self.x[q] += step;
                for (k, &j) in self.factor.head.iter().enumerate() {
                    self.x[j] -= col[k] * step;
                }
                let leaving = self.factor.head[r];
                if at_lower {
                    self.x[leaving] = self.lo[leaving];
                    self.status[leaving] = VarStatus::AtLower;
                } else {
                    self.x[leaving] = self.up[leaving];
                    self.status[leaving] = VarStatus::AtUpper;
                }
                self.status[q] = VarStatus::Basic;
                self.factor.push_eta(r, q, &col);
            }
            self.iterations += 1;
            self.attempt_iterations += 1;
            verified = false;
            let after = if phase1 {
                self.infeasibility_sum()
            } else {
                self.objective()
            };
            self.note_progress(before, after, true);
        }
    }

    fn finish(mut self, outcome: Outcome, lower: Vec<f64>, upper: Vec<f64>) -> LpSolution {
        let n = self.n;
        let status = match outcome {
            Outcome::Optimal => LpStatus::Optimal,
            Outcome::Infeasible => LpStatus::Infeasible,
            Outcome::Unbounded => LpStatus::Unbounded,
            Outcome::IterationLimit | Outcome::Singular => LpStatus::IterationLimit,
        };
        if status == LpStatus::Optimal {
            // Snap basic values that sit within tolerance of a bound.
            for &j in &self.factor.head {
                if self.lo[j].is_finite() && (self.x[j] - self.lo[j]).abs() <= feas_tol(self.lo[j])
                {
                    self.x[j] = self.lo[j];
                } else if self.up[j].is_finite()
                    && (self.x[j] - self.up[j]).abs() <= feas_tol(self.up[j])
                {
                    self.x[j] = self.up[j];
                }
            }
        }
        // Children re-solve from this factor, so hand them a short eta file.
        // On failure the eta-updated factor is kept; it is still valid.
        if status == LpStatus::Optimal
            && self.factor.eta_count() > self.model.config.refactor_interval / 5
        {
            let _ = self.refactor();
        }
        let y = self.btran_costs(|j| self.cost(j));
        let d = self.reduced_costs(&y);
        let x: Vec<f64> = self.x[..n].to_vec();
        let mut activity = vec![0.0; self.m];
        for (j, &v) in x.iter().enumerate() {
            if v != 0.0 {
                for (i, a) in self.model.column(j) {
                    activity[i] += a * v;
                }
            }
        }
        let objective = match status {
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => self.objective(),
        };
        LpSolution {
            status,
            x,
            activity,
            objective,
            duals: y,
            reduced_costs: d[..n].to_vec(),
            basis: Basis {
                status: self.status,
            },
            iterations: self.iterations,
            stats: self.stats,
            lower,
            upper,
            factor: (status == LpStatus::Optimal).then(|| Arc::new(self.factor)),
        }
    }
}
