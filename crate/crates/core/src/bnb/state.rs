use crate::simplex::{LpSolution, VarStatus};

/// Relative slack below which a row counts as tight.
const TIGHT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Down,
    Up,
}

impl Direction {
    fn slot(self) -> usize {
        match self {
            Direction::Down => 0,
            Direction::Up => 1,
        }
    }
}

/// One observed per-unit objective gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudocostUpdate {
    pub var: usize,
    pub direction: Direction,
    pub unit_gain: f64,
}

impl PseudocostUpdate {
    /// Unit gain of a child relative to its parent; `None` for an infeasible
    /// (non-finite) child. `frac` is the fractional part of the branched value.
    pub fn from_objectives(
        var: usize,
        direction: Direction,
        parent_obj: f64,
        child_obj: f64,
        frac: f64,
    ) -> Option<Self> {
        if !child_obj.is_finite() {
            return None;
        }
        let width = match direction {
            Direction::Down => frac,
            Direction::Up => 1.0 - frac,
        };
        Some(Self {
            var,
            direction,
            unit_gain: (child_obj - parent_obj).max(0.0) / width,
        })
    }
}

/// Search statistics shared with policies and feature extraction.
#[derive(Debug, Clone)]
pub struct SolverState {
    pc_sum: [Vec<f64>; 2],
    pc_count: [Vec<usize>; 2],
    /// Per-variable number of pseudocost observations seeded by strong branching.
    pub sb_seeded: Vec<usize>,
    /// Node LPs solved so far.
    pub lp_count: usize,
    pub row_age: Vec<usize>,
    pub col_age: Vec<usize>,
    last_x: Option<Vec<f64>>,
    pub incumbent: Option<(Vec<f64>, f64)>,
    inc_sum: Vec<f64>,
    inc_count: usize,
    /// Largest bound of a node taken from the queue; non-decreasing.
    pub lower_bound: f64,
}

impl SolverState {
    pub fn new(n: usize, m: usize) -> Self {
        Self {
            pc_sum: [vec![0.0; n], vec![0.0; n]],
            pc_count: [vec![0; n], vec![0; n]],
            sb_seeded: vec![0; n],
            lp_count: 0,
            row_age: vec![0; m],
            col_age: vec![0; n],
            last_x: None,
            incumbent: None,
            inc_sum: vec![0.0; n],
            inc_count: 0,
            lower_bound: f64::NEG_INFINITY,
        }
    }

    /// Counts a solved node LP and advances the row and column ages.
    pub fn record_lp(&mut self, lp: &LpSolution, rhs: &[f64]) {
        self.lp_count += 1;
        if !lp.is_optimal() {
            return;
        }
        for (i, age) in self.row_age.iter_mut().enumerate() {
            if is_tight(lp.activity[i], rhs[i]) {
                *age = 0;
            } else {
                *age += 1;
            }
        }
        for (j, age) in self.col_age.iter_mut().enumerate() {
            let unchanged = self.last_x.as_ref().is_some_and(|prev| prev[j] == lp.x[j]);
            if lp.basis.status[j] == VarStatus::Basic && unchanged {
                *age += 1;
            } else {
                *age = 0;
            }
        }
        self.last_x = Some(lp.x.clone());
    }

    pub fn update_pseudocosts(
        &mut self,
        var: usize,
        direction: Direction,
        parent_obj: f64,
        child_obj: f64,
        frac: f64,
    ) {
        if let Some(u) =
            PseudocostUpdate::from_objectives(var, direction, parent_obj, child_obj, frac)
        {
            self.apply_update(&u, false);
        }
    }

    pub fn apply_update(&mut self, update: &PseudocostUpdate, from_strong_branching: bool) {
        let d = update.direction.slot();
        self.pc_sum[d][update.var] += update.unit_gain;
        self.pc_count[d][update.var] += 1;
        if from_strong_branching {
            self.sb_seeded[update.var] += 1;
        }
    }

    /// Mean unit gain of `var` in `direction`, if observed.
    pub fn pseudocost(&self, var: usize, direction: Direction) -> Option<f64> {
        let d = direction.slot();
        let c = self.pc_count[d][var];
        (c > 0).then(|| self.pc_sum[d][var] / c as f64)
    }

    pub fn pseudocost_count(&self, var: usize, direction: Direction) -> usize {
        self.pc_count[direction.slot()][var]
    }

    /// Mean unit gain over every observation in `direction`.
    pub fn global_average(&self, direction: Direction) -> Option<f64> {
        let d = direction.slot();
        let c: usize = self.pc_count[d].iter().sum();
        (c > 0).then(|| self.pc_sum[d].iter().sum::<f64>() / c as f64)
    }

    /// Incumbent objective, `+inf` without one.
    pub fn incumbent_value(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |i| i.1)
    }

    /// Installs `x` if it improves on the incumbent.
    pub fn set_incumbent(&mut self, x: Vec<f64>, value: f64) {
        if value >= self.incumbent_value() {
            return;
        }
        for (s, v) in self.inc_sum.iter_mut().zip(&x) {
            *s += v;
        }
        self.inc_count += 1;
        self.incumbent = Some((x, value));
    }

    /// Mean value of `var` over every incumbent found so far (0 without one).
    pub fn average_incumbent(&self, var: usize) -> f64 {
        if self.inc_count == 0 {
            0.0
        } else {
            self.inc_sum[var] / self.inc_count as f64
        }
    }

    pub fn incumbent_count(&self) -> usize {
        self.inc_count
    }

    pub fn raise_lower_bound(&mut self, bound: f64) {
        self.lower_bound = self.lower_bound.max(bound);
    }
}

pub(crate) fn is_tight(activity: f64, rhs: f64) -> bool {
    activity >= rhs - TIGHT_TOL * (1.0 + rhs.abs())
}
