//! Dense LU factorization of the basis matrix with product-form (eta) updates.

/// Smallest pivot magnitude accepted during factorization.
const SINGULAR_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Singular;

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    /// Entries of the transformed entering column, excluding `pos`.
    entries: Vec<(usize, f64)>,
}

/// Sparse triangular factor stored both by row and by column.
#[derive(Debug, Clone, Default)]
struct Triangle {
    row_start: Vec<usize>,
    row_idx: Vec<usize>,
    row_val: Vec<f64>,
    col_start: Vec<usize>,
    col_idx: Vec<usize>,
    col_val: Vec<f64>,
}

impl Triangle {
    /// Builds from `(row, col, value)` triplets of the strictly off-diagonal part.
    fn from_triplets(m: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut t = Triangle::default();
        let (rs, ri, rv) = compress(m, entries.iter().map(|&(i, j, v)| (i, j, v)));
        let (cs, ci, cv) = compress(m, entries.iter().map(|&(i, j, v)| (j, i, v)));
        t.row_start = rs;
        t.row_idx = ri;
        t.row_val = rv;
        t.col_start = cs;
        t.col_idx = ci;
        t.col_val = cv;
        t
    }

    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_start[i]..self.row_start[i + 1];
        self.row_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.row_val[span].iter().copied())
    }

    fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.col_start[j]..self.col_start[j + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.col_val[span].iter().copied())
    }
}

fn compress(
    m: usize,
    entries: impl Iterator<Item = (usize, usize, f64)> + Clone,
) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut start = vec![0usize; m + 1];
    for (k, _, _) in entries.clone() {
        start[k + 1] += 1;
    }
    for k in 0..m {
        start[k + 1] += start[k];
    }
    let mut next = start.clone();
    let total = start[m];
    let mut idx = vec![0; total];
    let mut val = vec![0.0; total];
    for (k, other, v) in entries {
        idx[next[k]] = other;
        val[next[k]] = v;
        next[k] += 1;
    }
    (start, idx, val)
}

/// `P B = L U` for the basis at the last refactorization, followed by eta matrices
/// `B_k = B_0 E_1 ... E_k` for each pivot since. `L` has a unit diagonal.
#[derive(Debug, Clone)]
pub(crate) struct Factor {
    m: usize,
    lower: Triangle,
    upper: Triangle,
    diag: Vec<f64>,
    perm: Vec<usize>,
    etas: Vec<Eta>,
    /// Basic variable at each basis position.
    pub(crate) head: Vec<usize>,
}

impl Factor {
    /// Factorizes the matrix whose `k`-th column is produced by `fill(k, column)`.
    pub(crate) fn new(
        m: usize,
        head: Vec<usize>,
        mut fill: impl FnMut(usize, &mut [f64]),
    ) -> Result<Self, Singular> {
        let mut lu = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for k in 0..m {
            col.iter_mut().for_each(|v| *v = 0.0);
            fill(head[k], &mut col);
            for (i, &v) in col.iter().enumerate() {
                lu[i * m + k] = v;
            }
        }
        let mut perm: Vec<usize> = (0..m).collect();
        let mut nz: Vec<usize> = Vec::with_capacity(m);
        for k in 0..m {
            let mut p = k;
            let mut best = lu[k * m + k].abs();
            for i in k + 1..m {
                let v = lu[i * m + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < SINGULAR_TOL {
                return Err(Singular);
            }
            if p != k {
                for j in 0..m {
                    lu.swap(k * m + j, p * m + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * m + k];
            let (top, bottom) = lu.split_at_mut((k + 1) * m);
            let pivot_row = &top[k * m..(k + 1) * m];
            // Basis matrices are mostly slack columns, so the pivot row is sparse.
            nz.clear();
            nz.extend((k + 1..m).filter(|&j| pivot_row[j] != 0.0));
            for row in bottom.chunks_exact_mut(m) {
                if row[k] != 0.0 {
                    let l = row[k] / pivot;
                    row[k] = l;
                    for &j in &nz {
                        row[j] -= l * pivot_row[j];
                    }
                }
            }
        }
        let mut l_entries = Vec::new();
        let mut u_entries = Vec::new();
        let mut diag = vec![0.0; m];
        for i in 0..m {
            for j in 0..m {
                let v = lu[i * m + j];
                if v == 0.0 {
                    continue;
                }
                match j.cmp(&i) {
                    std::cmp::Ordering::Less => l_entries.push((i, j, v)),
                    std::cmp::Ordering::Equal => diag[i] = v,
                    std::cmp::Ordering::Greater => u_entries.push((i, j, v)),
                }
            }
        }
        Ok(Self {
            m,
            lower: Triangle::from_triplets(m, &l_entries),
            upper: Triangle::from_triplets(m, &u_entries),
            diag,
            perm,
            etas: Vec::new(),
            head,
        })
    }

    pub(crate) fn eta_count(&self) -> usize {
        self.etas.len()
    }

    /// Solves `B x = v` in place.
    pub(crate) fn ftran(&self, v: &mut [f64]) {
        let m = self.m;
        let mut w: Vec<f64> = self.perm.iter().map(|&p| v[p]).collect();
        for k in 0..m {
            let wk = w[k];
            if wk != 0.0 {
                for (i, l) in self.lower.col(k) {
                    w[i] -= l * wk;
                }
            }
        }
        for k in (0..m).rev() {
            let wk = w[k] / self.diag[k];
            w[k] = wk;
            if wk != 0.0 {
                for (i, u) in self.upper.col(k) {
                    w[i] -= u * wk;
                }
            }
        }
        for eta in &self.etas {
            let xp = w[eta.pos] / eta.pivot;
            w[eta.pos] = xp;
            if xp != 0.0 {
                for &(i, a) in &eta.entries {
                    w[i] -= a * xp;
                }
            }
        }
        v.copy_from_slice(&w);
    }

    /// Solves `B' y = v` in place.
    pub(crate) fn btran(&self, v: &mut [f64]) {
        let m = self.m;
        for eta in self.etas.iter().rev() {
            let s: f64 = eta.entries.iter().map(|&(i, a)| a * v[i]).sum();
            v[eta.pos] = (v[eta.pos] - s) / eta.pivot;
        }
        // U' z = v, sweeping the rows of U.
        for k in 0..m {
            let z = v[k] / self.diag[k];
            v[k] = z;
            if z != 0.0 {
                for (j, u) in self.upper.row(k) {
                    v[j] -= u * z;
                }
            }
        }
        // L' w = z.
        for k in (0..m).rev() {
            let w = v[k];
            if w != 0.0 {
                for (j, l) in self.lower.row(k) {
                    v[j] -= l * w;
                }
            }
        }
        let mut y = vec![0.0; m];
        for (i, &p) in self.perm.iter().enumerate() {
            y[p] = v[i];
        }
        v.copy_from_slice(&y);
    }

    /// Records the basis change at `pos` whose entering column, already
    /// transformed by [`Factor::ftran`], is `column`.
    pub(crate) fn push_eta(&mut self, pos: usize, entering: usize, column: &[f64]) {
        let entries = column
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != pos && a != 0.0)
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta {
            pos,
            pivot: column[pos],
            entries,
        });
        self.head[pos] = entering;
    }
}
