use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{SparseSymMatrix, SymOperator};

/// Dense symmetric matrix. Holds log-domain iterates, density matrices and
/// their estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSymMatrix {
    inner: DMatrix<f64>,
}

/// Eigenvalues in ascending order with matching eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn max(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }

    pub fn min(&self) -> f64 {
        *self.values.first().unwrap_or(&0.0)
    }

    pub fn top_vector(&self) -> Vec<f64> {
        let n = self.values.len();
        self.vectors.column(n - 1).iter().copied().collect()
    }
}

impl DenseSymMatrix {
    pub fn zeros(n: usize) -> Self {
        DenseSymMatrix {
            inner: DMatrix::zeros(n, n),
        }
    }

    pub fn identity(n: usize) -> Self {
        DenseSymMatrix {
            inner: DMatrix::identity(n, n),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        DenseSymMatrix {
            inner: DMatrix::from_diagonal(&DVector::from_column_slice(diag)),
        }
    }

    /// Builds from `f(i, j)` evaluated on the upper triangle and mirrored.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut inner = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                inner[(i, j)] = v;
                inner[(j, i)] = v;
            }
        }
        DenseSymMatrix { inner }
    }

    /// Wraps a square matrix after checking symmetry to `1e-12` relative and finiteness.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense matrix"));
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::InvalidArgument(format!(
                "matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok(DenseSymMatrix { inner: m })
    }

    /// Averages `m` with its transpose; for products that are symmetric in
    /// exact arithmetic.
    pub(crate) fn symmetrized(mut m: DMatrix<f64>) -> Self {
        debug_assert_eq!(m.nrows(), m.ncols());
        symmetrize(&mut m);
        DenseSymMatrix { inner: m }
    }

    /// Row-major square array.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            check_dim(n, r.len())?;
        }
        Self::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.inner
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    pub fn trace(&self) -> f64 {
        self.inner.trace()
    }

    pub fn is_finite(&self) -> bool {
        self.inner.iter().all(|v| v.is_finite())
    }

    /// `self += alpha * A` for a sparse symmetric `A`.
    pub fn add_sparse(&mut self, alpha: f64, a: &SparseSymMatrix) {
        for (r, c, v) in a.entries() {
            self.inner[(r, c)] += alpha * v;
            if r != c {
                self.inner[(c, r)] += alpha * v;
            }
        }
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &DenseSymMatrix) {
        self.inner.zip_apply(&other.inner, |a, b| *a += alpha * b);
    }

    /// `self += alpha * v v^T`.
    pub fn add_outer(&mut self, alpha: f64, v: &[f64]) {
        let n = self.n();
        for j in 0..n {
            let s = alpha * v[j];
            if s == 0.0 {
                continue;
            }
            let mut col = self.inner.column_mut(j);
            for i in 0..n {
                col[i] += s * v[i];
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.inner *= alpha;
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        DenseSymMatrix {
            inner: &self.inner * alpha,
        }
    }

    /// `self += shift * I`.
    pub fn shift_diagonal(&mut self, shift: f64) {
        for i in 0..self.n() {
            self.inner[(i, i)] += shift;
        }
    }

    pub fn frobenius_dot(&self, other: &DenseSymMatrix) -> f64 {
        self.inner.dot(&other.inner)
    }

    /// Full symmetric eigendecomposition, eigenvalues ascending.
    pub fn eigen(&self) -> Result<SymEigen> {
        if !self.is_finite() {
            return Err(Error::NonFinite("dense matrix"));
        }
        let n = self.n();
        if n == 0 {
            return Ok(SymEigen {
                values: Vec::new(),
                vectors: DMatrix::zeros(0, 0),
            });
        }
        let eig = SymmetricEigen::new(self.inner.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
        Ok(SymEigen { values, vectors })
    }

    pub fn lambda_max_exact(&self) -> Result<f64> {
        Ok(self.eigen()?.max())
    }

    pub fn spectral_norm_exact(&self) -> Result<f64> {
        let e = self.eigen()?;
        Ok(e.max().abs().max(e.min().abs()))
    }

    /// `U diag(f(lambda)) U^T` for the eigendecomposition of `self`.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let e = self.eigen()?;
        Ok(Self::from_eigen(&e, f))
    }

    fn from_eigen(e: &SymEigen, f: impl Fn(f64) -> f64) -> Self {
        let n = e.values.len();
        let mut scaled = e.vectors.clone();
        for (j, &l) in e.values.iter().enumerate() {
            let w = f(l);
            scaled.column_mut(j).iter_mut().for_each(|v| *v *= w);
        }
        let mut inner = scaled * e.vectors.transpose();
        symmetrize(&mut inner);
        debug_assert_eq!(inner.nrows(), n);
        DenseSymMatrix { inner }
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

impl SymOperator for DenseSymMatrix {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n();
        y.iter_mut().for_each(|v| *v = 0.0);
        // column-major storage: y += x[j] * A[:, j]
        let data = self.inner.as_slice();
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let col = &data[j * n..(j + 1) * n];
            for (yi, &a) in y.iter_mut().zip(col) {
                *yi += a * xj;
            }
        }
    }
}

/// `exp(V) / Tr(exp(V))`, computed from the eigendecomposition of `V` with
/// the largest eigenvalue subtracted before exponentiating.
pub fn exact_density(v: &DenseSymMatrix) -> Result<DenseSymMatrix> {
    Ok(density_from_eigen(&v.eigen()?))
}

/// [`exact_density`] from a precomputed eigendecomposition.
pub fn density_from_eigen(e: &SymEigen) -> DenseSymMatrix {
    let top = e.max();
    let total: f64 = e.values.iter().map(|&l| (l - top).exp()).sum();
    DenseSymMatrix::from_eigen(e, |l| (l - top).exp() / total)
}

impl Serialize for DenseSymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for DenseSymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        DenseSymMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_sym(n: usize, seed: u64) -> DenseSymMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseSymMatrix::from_upper_fn(n, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn zero_log_gives_uniform_density() {
        let y = exact_density(&DenseSymMatrix::zeros(4)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 0.25 } else { 0.0 };
                assert!((y.get(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn diagonal_log_density() {
        let y = exact_density(&DenseSymMatrix::from_diagonal(&[2f64.ln(), 0.0])).unwrap();
        assert!((y.get(0, 0) - 2.0 / 3.0).abs() < 1e-14);
        assert!((y.get(1, 1) - 1.0 / 3.0).abs() < 1e-14);
        assert!(y.get(0, 1).abs() < 1e-15);
    }

    #[test]
    fn density_matches_long_taylor_sum() {
        let v = random_sym(8, 5);
        let y = exact_density(&v).unwrap();
        // exp(V) by scaling and squaring of a 40-term Taylor sum
        let s = 16.0;
        let a = v.as_matrix() / s;
        let mut term = DMatrix::<f64>::identity(8, 8);
        let mut sum = term.clone();
        for k in 1..40 {
            term = &term * &a / k as f64;
            sum += &term;
        }
        for _ in 0..4 {
            sum = &sum * &sum;
        }
        let tr = sum.trace();
        for i in 0..8 {
            for j in 0..8 {
                assert!((y.get(i, j) - sum[(i, j)] / tr).abs() < 1e-12);
            }
        }
        let e = y.eigen().unwrap();
        assert!(e.min() >= -1e-12);
        assert!((y.trace() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn density_survives_huge_logs() {
        let y = exact_density(&DenseSymMatrix::from_diagonal(&[1000.0, 999.0])).unwrap();
        let e = std::f64::consts::E;
        assert!((y.get(0, 0) - e / (e + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn density_rejects_nan() {
        let v = DenseSymMatrix::from_diagonal(&[f64::NAN, 0.0]);
        assert!(exact_density(&v).is_err());
    }

    #[test]
    fn asymmetric_input_rejected() {
        assert!(DenseSymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.5, 1.0]]).is_err());
    }

    #[test]
    fn dense_apply_matches_nalgebra() {
        let v = random_sym(7, 2);
        let x: Vec<f64> = (0..7).map(|i| i as f64 - 3.0).collect();
        let mut y = vec![0.0; 7];
        v.apply_into(&x, &mut y);
        let want = v.as_matrix() * DVector::from_column_slice(&x);
        for i in 0..7 {
            assert!((y[i] - want[i]).abs() < 1e-12);
        }
    }
}
