//! Upper-triangle sparse storage for symmetric matrices.
//!
//! A [`Pattern`] holds the `(row, col)` index arrays, sorted row-major with
//! `row <= col`. Several [`SparseSymMatrix`] values can point at the same
//! pattern through an `Arc`, which is how an instance keeps one index
//! structure and `m` value arrays.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{DenseSymMatrix, SymOperator};

/// Sorted upper-triangle sparsity pattern of an `n x n` symmetric matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    n: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    id: u64,
}

impl Pattern {
    /// Builds a pattern from upper-triangle positions. Positions are sorted;
    /// duplicates and out-of-range or lower-triangle indices are rejected.
    pub fn new(n: usize, mut positions: Vec<(usize, usize)>) -> Result<Self> {
        positions.sort_unstable();
        for w in positions.windows(2) {
            if w[0] == w[1] {
                return Err(Error::InvalidArgument(format!(
                    "duplicate entry ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        for &(r, c) in &positions {
            if r > c || c >= n {
                return Err(Error::InvalidArgument(format!(
                    "entry ({r}, {c}) is not in the upper triangle of a {n}x{n} matrix"
                )));
            }
        }
        let (rows, cols) = positions.into_iter().unzip();
        Ok(Self::from_sorted(n, rows, cols))
    }

    fn from_sorted(n: usize, rows: Vec<usize>, cols: Vec<usize>) -> Self {
        let id = fingerprint(n, &rows, &cols);
        Pattern { n, rows, cols, id }
    }

    /// Full upper triangle including the diagonal.
    pub fn dense(n: usize) -> Self {
        let mut rows = Vec::with_capacity(n * (n + 1) / 2);
        let mut cols = Vec::with_capacity(n * (n + 1) / 2);
        for r in 0..n {
            for c in r..n {
                rows.push(r);
                cols.push(c);
            }
        }
        Self::from_sorted(n, rows, cols)
    }

    pub fn diagonal(n: usize) -> Self {
        Self::from_sorted(n, (0..n).collect(), (0..n).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored (upper-triangle) positions.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Number of nonzeros of the full symmetric matrix (off-diagonal counted twice).
    pub fn full_nnz(&self) -> usize {
        self.rows
            .iter()
            .zip(&self.cols)
            .map(|(r, c)| if r == c { 1 } else { 2 })
            .sum()
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    /// Stable 64-bit fingerprint of `(n, rows, cols)`.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().copied().zip(self.cols.iter().copied())
    }

    /// Index of `(row, col)` (either order) in the pattern.
    pub fn find(&self, row: usize, col: usize) -> Option<usize> {
        let key = if row <= col { (row, col) } else { (col, row) };
        let start = self.rows.partition_point(|&r| r < key.0);
        let end = self.rows.partition_point(|&r| r <= key.0);
        self.cols[start..end]
            .binary_search(&key.1)
            .ok()
            .map(|k| start + k)
    }

    pub fn is_subset_of(&self, other: &Pattern) -> bool {
        self.n == other.n && self.positions().all(|(r, c)| other.find(r, c).is_some())
    }

    /// Sorted union of several patterns of equal dimension.
    pub fn union<'a>(n: usize, patterns: impl IntoIterator<Item = &'a Pattern>) -> Result<Self> {
        let mut set = std::collections::BTreeSet::new();
        for p in patterns {
            check_dim(n, p.n)?;
            set.extend(p.positions());
        }
        let (rows, cols) = set.into_iter().unzip();
        Ok(Self::from_sorted(n, rows, cols))
    }

    /// Adds the pattern-restricted outer product `weight * v v^T` to `acc`,
    /// doubling off-diagonal positions so that `dot(values, acc)` equals
    /// `weight * v^T A v` for any matrix stored on this pattern.
    pub fn accumulate_outer(&self, v: &[f64], weight: f64, acc: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n);
        debug_assert_eq!(acc.len(), self.len());
        for ((a, &r), &c) in acc.iter_mut().zip(&self.rows).zip(&self.cols) {
            let p = v[r] * v[c];
            *a += if r == c { weight * p } else { 2.0 * weight * p };
        }
    }

    /// Samples a dense symmetric matrix on the pattern with the same doubling
    /// as [`Pattern::accumulate_outer`]: `dot(values, out) = Tr(A Y)`.
    pub fn sample_dense(&self, y: &DenseSymMatrix) -> Vec<f64> {
        self.positions()
            .map(|(r, c)| {
                if r == c {
                    y.get(r, c)
                } else {
                    y.get(r, c) + y.get(c, r)
                }
            })
            .collect()
    }
}

fn fingerprint(n: usize, rows: &[usize], cols: &[usize]) -> u64 {
    // FNV-1a over the little-endian words
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |x: u64| {
        for b in x.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(n as u64);
    for (&r, &c) in rows.iter().zip(cols) {
        eat(r as u64);
        eat(c as u64);
    }
    h
}

/// Symmetric matrix stored as values on a shared upper-triangle [`Pattern`].
#[derive(Debug, Clone)]
pub struct SparseSymMatrix {
    pattern: Arc<Pattern>,
    values: Vec<f64>,
}

impl PartialEq for SparseSymMatrix {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.pattern, &other.pattern) || self.pattern == other.pattern)
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl SparseSymMatrix {
    /// Builds a matrix from triplets. Lower-triangle triplets are reflected
    /// into the upper triangle; a position given twice (in either triangle)
    /// is an error.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (r, c, v) in triplets {
            if r >= n || c >= n {
                return Err(Error::InvalidArgument(format!(
                    "entry ({r}, {c}) out of range for n = {n}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("sparse matrix entry"));
            }
            let key = if r <= c { (r, c) } else { (c, r) };
            if map.insert(key, v).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "duplicate entry ({}, {})",
                    key.0, key.1
                )));
            }
        }
        let mut rows = Vec::with_capacity(map.len());
        let mut cols = Vec::with_capacity(map.len());
        let mut values = Vec::with_capacity(map.len());
        for ((r, c), v) in map {
            rows.push(r);
            cols.push(c);
            values.push(v);
        }
        Ok(SparseSymMatrix {
            pattern: Arc::new(Pattern::from_sorted(n, rows, cols)),
            values,
        })
    }

    pub fn on_pattern(pattern: Arc<Pattern>, values: Vec<f64>) -> Result<Self> {
        check_dim(pattern.len(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sparse matrix entry"));
        }
        Ok(SparseSymMatrix { pattern, values })
    }

    pub fn identity(n: usize) -> Self {
        SparseSymMatrix {
            pattern: Arc::new(Pattern::diagonal(n)),
            values: vec![1.0; n],
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::on_pattern(Arc::new(Pattern::diagonal(diag.len())), diag.to_vec())
    }

    pub fn zeros_on(pattern: Arc<Pattern>) -> Self {
        let len = pattern.len();
        SparseSymMatrix {
            pattern,
            values: vec![0.0; len],
        }
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn pattern_id(&self) -> u64 {
        self.pattern.id
    }

    /// Stored `(row, col, value)` triplets, upper triangle only.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.pattern
            .positions()
            .zip(&self.values)
            .map(|((r, c), &v)| (r, c, v))
    }

    /// Re-expresses the matrix on a superset pattern, filling new positions with zero.
    pub fn restrict_to(&self, target: &Arc<Pattern>) -> Result<Self> {
        if Arc::ptr_eq(&self.pattern, target) || *self.pattern == **target {
            return Ok(SparseSymMatrix {
                pattern: Arc::clone(target),
                values: self.values.clone(),
            });
        }
        if !self.pattern.is_subset_of(target) {
            return Err(Error::InvalidArgument(
                "target pattern does not contain the matrix pattern".into(),
            ));
        }
        let mut values = vec![0.0; target.len()];
        for (r, c, v) in self.entries() {
            // subset checked above
            values[target.find(r, c).expect("subset")] = v;
        }
        Ok(SparseSymMatrix {
            pattern: Arc::clone(target),
            values,
        })
    }

    /// `y = A x`, reflecting the stored triangle.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.n(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spmv argument"));
        }
        let mut y = vec![0.0; self.n()];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    /// `v^T A v` over the stored pattern.
    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.entries()
            .map(|(r, c, a)| {
                if r == c {
                    a * v[r] * v[r]
                } else {
                    2.0 * a * v[r] * v[c]
                }
            })
            .sum()
    }

    /// `Tr(A Y)` for dense symmetric `Y`.
    pub fn frobenius_dot(&self, y: &DenseSymMatrix) -> f64 {
        self.entries()
            .map(|(r, c, a)| {
                if r == c {
                    a * y.get(r, c)
                } else {
                    a * (y.get(r, c) + y.get(c, r))
                }
            })
            .sum()
    }

    pub fn to_dense(&self) -> DenseSymMatrix {
        let mut d = DenseSymMatrix::zeros(self.n());
        d.add_sparse(1.0, self);
        d
    }
}

impl SymOperator for SparseSymMatrix {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        let p = &*self.pattern;
        for ((&r, &c), &a) in p.rows.iter().zip(&p.cols).zip(&self.values) {
            y[r] += a * x[c];
            if r != c {
                y[c] += a * x[r];
            }
        }
    }
}
