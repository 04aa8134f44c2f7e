//! Dense row-major matrices and CSR sparse matrices.
//!
//! The factor matrices are small and dense; adjacency and content snapshots
//! are sparse. Both types are deliberately minimal: the pipeline only needs
//! row access, elementwise passes and entry iteration, and keeping the loops
//! in this crate makes every computation reproducible bit for bit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `rows x cols` matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenseRepr")]
pub struct Dense {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Serialized form of [`Dense`]; validated on deserialization.
#[derive(Deserialize)]
struct DenseRepr {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<DenseRepr> for Dense {
    type Error = String;

    fn try_from(r: DenseRepr) -> std::result::Result<Self, String> {
        if r.rows.checked_mul(r.cols) != Some(r.data.len()) {
            return Err(format!(
                "dense matrix payload has {} values but declares shape {}x{}",
                r.data.len(),
                r.rows,
                r.cols
            ));
        }
        Ok(Dense {
            rows: r.rows,
            cols: r.cols,
            data: r.data,
        })
    }
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Dense { rows, cols, data }
    }

    /// Builds from explicit rows; panics on ragged input (test/builder helper).
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(
            rows.iter().all(|r| r.len() == cols),
            "ragged rows passed to Dense::from_rows"
        );
        Dense {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    /// Fills a matrix with draws from the open unit interval.
    pub fn random_uniform(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let mut data = vec![0.0; rows * cols];
        for v in data.iter_mut() {
            // gen::<f64>() yields [0, 1); resample the measure-zero 0.0 so
            // every initial entry is strictly positive.
            let mut x: f64 = rng.gen();
            while x == 0.0 {
                x = rng.gen();
            }
            *v = x;
        }
        Dense { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Sum of squared entries.
    pub fn frob_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self += s * other`, entrywise.
    pub fn add_scaled(&mut self, s: f64, other: &Dense) {
        debug_assert_eq!(self.shape(), other.shape());
        for (d, x) in self.data.iter_mut().zip(&other.data) {
            *d += s * x;
        }
    }
}

/// `sum_q a[q] * b[q]` over two equal-length row slices.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `dst += s * src`, entrywise over row slices.
#[inline]
pub fn axpy(dst: &mut [f64], s: f64, src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, x) in dst.iter_mut().zip(src) {
        *d += s * x;
    }
}

/// Sparse `rows x cols` matrix in compressed sparse row form.
///
/// Column indices are stored per row in strictly increasing order, so entry
/// lookup is a binary search within the row.
#[derive(Debug, Clone, PartialEq)]
pub struct Sparse {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
}

impl Sparse {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Sparse {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets in any order.
    ///
    /// Rejects out-of-range coordinates and duplicate coordinates: callers
    /// that legitimately merge entries must do so before building.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        if cols > u32::MAX as usize {
            return Err(Error::InvalidInput(format!(
                "column count {cols} exceeds the supported maximum"
            )));
        }
        for &(i, j, _) in &entries {
            if i >= rows || j >= cols {
                return Err(Error::InvalidInput(format!(
                    "entry ({i}, {j}) is outside a {rows}x{cols} matrix"
                )));
            }
        }
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(Error::InvalidInput(format!(
                    "duplicate entry at ({}, {})",
                    pair[0].0, pair[0].1
                )));
            }
        }
        let mut row_ptr = vec![0usize; rows + 1];
        for &(i, _, _) in &entries {
            row_ptr[i + 1] += 1;
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = entries.iter().map(|&(_, j, _)| j as u32).collect();
        let values = entries.iter().map(|&(_, _, v)| v).collect();
        Ok(Sparse {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row_entries(&self, i: usize) -> (&[u32], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row_entries(i);
        match cols.binary_search(&(j as u32)) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let (cols, _) = self.row_entries(i);
        cols.binary_search(&(j as u32)).is_ok()
    }

    /// Iterates stored entries as `(row, col, value)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |i| {
            let (cols, vals) = self.row_entries(i);
            cols.iter()
                .zip(vals)
                .map(move |(&j, &v)| (i, j as usize, v))
        })
    }

    /// Number of stored entries on the main diagonal.
    pub fn diagonal_nnz(&self) -> usize {
        (0..self.rows.min(self.cols))
            .filter(|&i| self.contains(i, i))
            .count()
    }

    /// True when every stored entry `(i, j, v)` has an exact mirror `(j, i, v)`.
    pub fn is_symmetric(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        self.iter().all(|(i, j, v)| self.get(j, i) == v)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Solves the small dense system `a x = b` by Gaussian elimination with
/// partial pivoting.
///
/// Returns `None` when the system is singular or the pivot-ratio condition
/// estimate exceeds `max_condition`; callers fall back to simpler models in
/// that case.
pub fn solve_small(a: &Dense, b: &[f64], max_condition: f64) -> Option<Vec<f64>> {
    let n = a.rows();
    assert_eq!(a.cols(), n, "solve_small needs a square system");
    assert_eq!(b.len(), n);
    let mut m = vec![0.0f64; n * (n + 1)];
    for i in 0..n {
        m[i * (n + 1)..i * (n + 1) + n].copy_from_slice(a.row(i));
        m[i * (n + 1) + n] = b[i];
    }
    let w = n + 1;
    let mut max_piv = 0.0f64;
    let mut min_piv = f64::INFINITY;
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r, &s| m[r * w + col].abs().total_cmp(&m[s * w + col].abs()))
            .unwrap();
        let piv = m[pivot_row * w + col].abs();
        if piv == 0.0 || !piv.is_finite() {
            return None;
        }
        max_piv = max_piv.max(piv);
        min_piv = min_piv.min(piv);
        if pivot_row != col {
            for j in 0..w {
                m.swap(col * w + j, pivot_row * w + j);
            }
        }
        for r in col + 1..n {
            let f = m[r * w + col] / m[col * w + col];
            if f == 0.0 {
                continue;
            }
            for j in col..w {
                m[r * w + j] -= f * m[col * w + j];
            }
        }
    }
    if max_piv / min_piv > max_condition {
        return None;
    }
    let mut x = vec![0.0f64; n];
    for i in (0..n).rev() {
        let mut s = m[i * w + n];
        for j in i + 1..n {
            s -= m[i * w + j] * x[j];
        }
        x[i] = s / m[i * w + i];
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}
