use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::InstanceError;

/// Seed for every random choice made by the generators and the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Derives an independent seed for a numbered sub-stream (splitmix64 mix).
    pub fn derive(self, stream: u64) -> RngSeed {
        let mut z = self
            .0
            .wrapping_add(stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
            .wrapping_add(0x632b_e59b_d9b4_e019);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        RngSeed(z ^ (z >> 31))
    }
}

/// Row-major sparse matrix. Column indices are strictly increasing within a row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRows {
    pub row_start: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseRows {
    pub fn n_rows(&self) -> usize {
        self.row_start.len().saturating_sub(1)
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_start[i]..self.row_start[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn row_len(&self, i: usize) -> usize {
        self.row_start[i + 1] - self.row_start[i]
    }
}

/// A minimization MILP `min c'x  s.t.  Ax <= b,  l <= x <= u,  x_j integer for flagged j`.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpInstance {
    pub name: String,
    pub objective: Vec<f64>,
    pub rows: SparseRows,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub is_integer: Vec<bool>,
}

impl MilpInstance {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_cons(&self) -> usize {
        self.rhs.len()
    }

    pub fn nnz(&self) -> usize {
        self.rows.nnz()
    }

    /// Checks every structural invariant of the instance.
    pub fn validate(&self) -> Result<(), InstanceError> {
        let n = self.n_vars();
        let m = self.n_cons();
        let bad = |msg: String| Err(InstanceError::Invariant(msg));
        if self.name.is_empty() || self.name.chars().any(char::is_whitespace) {
            return bad(format!(
                "instance name {:?} must be non-empty without whitespace",
                self.name
            ));
        }
        if self.lower.len() != n || self.upper.len() != n || self.is_integer.len() != n {
            return bad("variable vectors have inconsistent lengths".into());
        }
        if self.rows.n_rows() != m {
            return bad(format!(
                "matrix has {} rows but rhs has {m}",
                self.rows.n_rows()
            ));
        }
        if self.rows.row_start.first() != Some(&0)
            || self.rows.row_start.last() != Some(&self.rows.cols.len())
            || self.rows.cols.len() != self.rows.vals.len()
        {
            return bad("malformed row pointers".into());
        }
        for (j, &c) in self.objective.iter().enumerate() {
            if !c.is_finite() {
                return bad(format!("objective[{j}] is not finite"));
            }
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return bad(format!("variable {j} has invalid bounds [{l}, {u}]"));
            }
            if l > u {
                return bad(format!(
                    "variable {j}: lower bound {l} exceeds upper bound {u}"
                ));
            }
            if self.is_integer[j]
                && ((l.is_finite() && l.fract() != 0.0) || (u.is_finite() && u.fract() != 0.0))
            {
                return bad(format!(
                    "integer variable {j} has fractional bounds [{l}, {u}]"
                ));
            }
        }
        for i in 0..m {
            if !self.rhs[i].is_finite() {
                return bad(format!("rhs[{i}] is not finite"));
            }
            if self.rows.row_start[i] > self.rows.row_start[i + 1] {
                return bad(format!("row {i} has negative length"));
            }
            if self.rows.row_len(i) == 0 {
                return bad(format!("row {i} has no nonzeros"));
            }
            let mut prev: Option<usize> = None;
            for (j, a) in self.rows.row(i) {
                if j >= n {
                    return bad(format!("row {i} references column {j} >= {n}"));
                }
                if prev.is_some_and(|p| p >= j) {
                    return bad(format!("row {i} columns not strictly increasing"));
                }
                if !a.is_finite() || a == 0.0 {
                    return bad(format!("row {i} column {j} has coefficient {a}"));
                }
                prev = Some(j);
            }
        }
        Ok(())
    }

    /// Objective value `c'x`.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Row activities `Ax`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_cons())
            .map(|i| self.rows.row(i).map(|(j, a)| a * x[j]).sum())
            .collect()
    }

    /// Whether `x` satisfies rows, bounds and integrality within `tol`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        let rows_ok = self
            .activities(x)
            .iter()
            .zip(&self.rhs)
            .all(|(a, b)| *a <= b + tol * (1.0 + b.abs()));
        let bounds_ok = (0..self.n_vars()).all(|j| {
            x[j] >= self.lower[j] - tol
                && x[j] <= self.upper[j] + tol
                && (!self.is_integer[j] || (x[j] - x[j].round()).abs() <= tol)
        });
        rows_ok && bounds_ok
    }
}

/// Incremental constructor used by the generators; enforces the invariants at `build`.
#[derive(Debug, Clone)]
pub struct InstanceBuilder {
    name: String,
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    is_integer: Vec<bool>,
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
}

impl InstanceBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            objective: Vec::new(),
            lower: Vec::new(),
            upper: Vec::new(),
            is_integer: Vec::new(),
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64, integer: bool) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.is_integer.push(integer);
        self.objective.len() - 1
    }

    pub fn add_binary(&mut self, cost: f64) -> usize {
        self.add_var(cost, 0.0, 1.0, true)
    }

    /// Adds `sum(coef * x) <= rhs`. Duplicate columns are merged, zeros dropped.
    pub fn add_le(&mut self, entries: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        let mut entries: Vec<(usize, f64)> = entries.into_iter().collect();
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (j, a) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => merged.push((j, a)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        self.rows.push(merged);
        self.rhs.push(rhs);
    }

    /// Adds `sum(coef * x) == rhs` as a pair of `<=` rows.
    pub fn add_eq(&mut self, entries: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        let entries: Vec<(usize, f64)> = entries.into_iter().collect();
        self.add_le(entries.iter().copied(), rhs);
        self.add_le(entries.into_iter().map(|(j, a)| (j, -a)), -rhs);
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn build(self) -> Result<MilpInstance, InstanceError> {
        let mut rows = SparseRows {
            row_start: vec![0],
            ..Default::default()
        };
        for row in &self.rows {
            for &(j, a) in row {
                rows.cols.push(j);
                rows.vals.push(a);
            }
            rows.row_start.push(rows.cols.len());
        }
        let inst = MilpInstance {
            name: self.name,
            objective: self.objective,
            rows,
            rhs: self.rhs,
            lower: self.lower,
            upper: self.upper,
            is_integer: self.is_integer,
        };
        inst.validate()?;
        Ok(inst)
    }
}
