use rand::Rng;
use serde::{Deserialize, Serialize};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense2 {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Dense2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Glorot-uniform initialization over `[-a, a]`, `a = sqrt(6 / (rows + cols))`.
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-a..=a)).collect();
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Rows `[start, end)` as a flat slice.
    pub fn row_block(&self, start: usize, end: usize) -> &[f64] {
        &self.data[start * self.cols..end * self.cols]
    }
}

/// `out (r x c) = beta * out + a (r x k) * b (k x c)`, all row-major.
pub fn matmul_into(r: usize, k: usize, c: usize, a: &[f64], b: &[f64], out: &mut [f64], beta: f64) {
    debug_assert_eq!(a.len(), r * k);
    debug_assert_eq!(b.len(), k * c);
    debug_assert_eq!(out.len(), r * c);
    if r == 0 || c == 0 {
        return;
    }
    // SAFETY: the slices hold exactly the extents described by the strides.
    unsafe {
        matrixmultiply::dgemm(
            r,
            k,
            c,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            c as isize,
            1,
            beta,
            out.as_mut_ptr(),
            c as isize,
            1,
        );
    }
}

pub fn matmul(r: usize, k: usize, c: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    matmul_into(r, k, c, a, b, &mut out, 0.0);
    out
}

/// `out (k x c) += a^T * b` with `a (r x k)` and `b (r x c)`.
pub fn matmul_at_b_acc(r: usize, k: usize, c: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert_eq!(a.len(), r * k);
    debug_assert_eq!(b.len(), r * c);
    debug_assert_eq!(out.len(), k * c);
    if k == 0 || c == 0 {
        return;
    }
    // SAFETY: `a` is read through transposed strides within its `r x k` extent.
    unsafe {
        matrixmultiply::dgemm(
            k,
            r,
            c,
            1.0,
            a.as_ptr(),
            1,
            k as isize,
            b.as_ptr(),
            c as isize,
            1,
            1.0,
            out.as_mut_ptr(),
            c as isize,
            1,
        );
    }
}

/// `a (r x c) * b^T` with `b (k x c)`, giving `r x k`.
pub fn matmul_a_bt(r: usize, c: usize, k: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), r * c);
    debug_assert_eq!(b.len(), k * c);
    let mut out = vec![0.0; r * k];
    if r == 0 || k == 0 {
        return out;
    }
    // SAFETY: `b` is read through transposed strides within its `k x c` extent.
    unsafe {
        matrixmultiply::dgemm(
            r,
            c,
            k,
            1.0,
            a.as_ptr(),
            c as isize,
            1,
            b.as_ptr(),
            1,
            c as isize,
            0.0,
            out.as_mut_ptr(),
            k as isize,
            1,
        );
    }
    out
}

/// Adds `bias` to every row of `x`.
pub fn add_row_bias(x: &mut [f64], bias: &[f64]) {
    for row in x.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

/// Column sums of `x (r x c)` accumulated into `out`.
pub fn col_sums_acc(x: &[f64], out: &mut [f64]) {
    for row in x.chunks_exact(out.len()) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}
