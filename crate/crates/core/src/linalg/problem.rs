use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{power_method, DenseSymMatrix, Pattern, SparseSymMatrix};

/// Provenance recorded alongside an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub density: Option<f64>,
    pub seed: Option<u64>,
    pub scaling: Option<f64>,
    pub value_distribution: String,
}

impl Default for InstanceMeta {
    fn default() -> Self {
        InstanceMeta {
            density: None,
            seed: None,
            scaling: None,
            value_distribution: "unspecified".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub value: f64,
    pub converged: bool,
}

/// Problem data `{A_j}`, optional `B` and `c` for
/// `min_{x in simplex} lambda_max(B + sum_j x_j A_j) + c^T x`.
///
/// All matrices (and `B`) are stored on one union pattern; when the inputs
/// already shared a pattern, `joint_pattern()` is true.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pattern: Arc<Pattern>,
    matrices: Vec<SparseSymMatrix>,
    b: Option<SparseSymMatrix>,
    c: Option<Vec<f64>>,
    joint_pattern: bool,
    meta: InstanceMeta,
    lipschitz: OnceLock<LipschitzEstimate>,
}

impl PartialEq for ProblemInstance {
    fn eq(&self, other: &Self) -> bool {
        let bits = |v: &Option<Vec<f64>>| v.as_ref().map(|v| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        self.pattern == other.pattern
            && self.matrices == other.matrices
            && self.b == other.b
            && bits(&self.c) == bits(&other.c)
            && self.joint_pattern == other.joint_pattern
            && self.meta == other.meta
    }
}

impl ProblemInstance {
    pub fn new(
        matrices: Vec<SparseSymMatrix>,
        b: Option<SparseSymMatrix>,
        c: Option<Vec<f64>>,
    ) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::InvalidArgument("instance needs at least one matrix".into()))?;
        let n = first.n();
        for a in &matrices {
            check_dim(n, a.n())?;
        }
        if let Some(b) = &b {
            check_dim(n, b.n())?;
        }
        if let Some(c) = &c {
            check_dim(matrices.len(), c.len())?;
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("linear term c"));
            }
        }
        let joint_pattern = matrices.iter().all(|a| {
            Arc::ptr_eq(a.pattern(), first.pattern()) || a.pattern() == first.pattern()
        });
        let shares_b = b
            .as_ref()
            .is_none_or(|b| b.pattern().is_subset_of(first.pattern()));
        let pattern = if joint_pattern && shares_b {
            Arc::clone(first.pattern())
        } else {
            let mut all: Vec<&Pattern> = matrices.iter().map(|a| &**a.pattern()).collect();
            if let Some(b) = &b {
                all.push(b.pattern());
            }
            Arc::new(Pattern::union(n, all)?)
        };
        let matrices = matrices
            .iter()
            .map(|a| a.restrict_to(&pattern))
            .collect::<Result<Vec<_>>>()?;
        let b = b.map(|b| b.restrict_to(&pattern)).transpose()?;
        Ok(ProblemInstance {
            pattern,
            matrices,
            b,
            c,
            joint_pattern,
            meta: InstanceMeta::default(),
            lipschitz: OnceLock::new(),
        })
    }

    pub fn with_meta(mut self, meta: InstanceMeta) -> Self {
        self.meta = meta;
        self
    }

    /// Builds directly from value arrays on a shared pattern (no re-indexing).
    pub(crate) fn from_parts(
        pattern: Arc<Pattern>,
        values: Vec<Vec<f64>>,
        b: Option<Vec<f64>>,
        c: Option<Vec<f64>>,
        joint_pattern: bool,
        meta: InstanceMeta,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("instance needs at least one matrix".into()));
        }
        let matrices = values
            .into_iter()
            .map(|v| SparseSymMatrix::on_pattern(Arc::clone(&pattern), v))
            .collect::<Result<Vec<_>>>()?;
        let b = b
            .map(|v| SparseSymMatrix::on_pattern(Arc::clone(&pattern), v))
            .transpose()?;
        if let Some(c) = &c {
            check_dim(matrices.len(), c.len())?;
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("linear term c"));
            }
        }
        Ok(ProblemInstance {
            pattern,
            matrices,
            b,
            c,
            joint_pattern,
            meta,
            lipschitz: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.pattern.n()
    }

    pub fn m(&self) -> usize {
        self.matrices.len()
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    pub fn matrices(&self) -> &[SparseSymMatrix] {
        &self.matrices
    }

    pub fn matrix(&self, j: usize) -> &SparseSymMatrix {
        &self.matrices[j]
    }

    pub fn b(&self) -> Option<&SparseSymMatrix> {
        self.b.as_ref()
    }

    pub fn c(&self) -> Option<&[f64]> {
        self.c.as_deref()
    }

    pub fn joint_pattern(&self) -> bool {
        self.joint_pattern
    }

    pub fn meta(&self) -> &InstanceMeta {
        &self.meta
    }

    /// Nonzeros per matrix, full symmetric count.
    pub fn nnz_per_matrix(&self) -> usize {
        self.pattern.full_nnz()
    }

    fn check_weights(&self, x: &[f64]) -> Result<()> {
        check_dim(self.m(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("combination weights"));
        }
        Ok(())
    }

    /// Pattern values of `sum_j x_j A_j` (without `B`).
    pub fn combination_values(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (a, &xj) in self.matrices.iter().zip(x) {
            if xj == 0.0 {
                continue;
            }
            for (o, &v) in out.iter_mut().zip(a.values()) {
                *o += xj * v;
            }
        }
    }

    /// `B + sum_j x_j A_j` on the instance pattern.
    pub fn assemble_combination(&self, x: &[f64]) -> Result<SparseSymMatrix> {
        self.check_weights(x)?;
        let mut values = vec![0.0; self.pattern.len()];
        self.combination_values(x, &mut values);
        if let Some(b) = &self.b {
            values.iter_mut().zip(b.values()).for_each(|(v, bv)| *v += bv);
        }
        SparseSymMatrix::on_pattern(Arc::clone(&self.pattern), values)
    }

    /// `target += alpha * (B + sum_j x_j A_j)`.
    pub fn add_combination_to(&self, x: &[f64], alpha: f64, target: &mut DenseSymMatrix) -> Result<()> {
        check_dim(self.n(), target.n())?;
        let a = self.assemble_combination(x)?;
        target.add_sparse(alpha, &a);
        Ok(())
    }

    /// `[Tr(A_1 Y); ...; Tr(A_m Y)]`.
    pub fn adjoint_apply(&self, y: &DenseSymMatrix) -> Result<Vec<f64>> {
        check_dim(self.n(), y.n())?;
        Ok(self.adjoint_sampled(&self.pattern.sample_dense(y)))
    }

    /// Adjoint applied to pattern samples produced by
    /// [`Pattern::sample_dense`] or [`Pattern::accumulate_outer`].
    pub fn adjoint_sampled(&self, sampled: &[f64]) -> Vec<f64> {
        self.matrices
            .iter()
            .map(|a| a.values().iter().zip(sampled).map(|(x, y)| x * y).sum())
            .collect()
    }

    /// `A^*(Y) + c`, the x-component of the monotone operator.
    pub fn primal_gradient(&self, y: &DenseSymMatrix) -> Result<Vec<f64>> {
        let mut g = self.adjoint_apply(y)?;
        self.add_c(&mut g);
        Ok(g)
    }

    pub(crate) fn add_c(&self, g: &mut [f64]) {
        if let Some(c) = &self.c {
            g.iter_mut().zip(c).for_each(|(a, b)| *a += b);
        }
    }

    pub fn c_dot(&self, x: &[f64]) -> f64 {
        self.c
            .as_ref()
            .map_or(0.0, |c| c.iter().zip(x).map(|(a, b)| a * b).sum())
    }

    pub fn b_dot(&self, y: &DenseSymMatrix) -> f64 {
        self.b.as_ref().map_or(0.0, |b| b.frobenius_dot(y))
    }

    /// `max_j ||A_j||` by power iteration on each matrix; cached on first call.
    pub fn lipschitz_constant(&self, tol: f64) -> Result<LipschitzEstimate> {
        if !(tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
        }
        if let Some(l) = self.lipschitz.get() {
            return Ok(*l);
        }
        let mut est = LipschitzEstimate {
            value: 0.0,
            converged: true,
        };
        for (j, a) in self.matrices.iter().enumerate() {
            let p = power_method(a, tol, 20_000, j as u64);
            est.value = est.value.max(p.magnitude);
            est.converged &= p.converged;
        }
        Ok(*self.lipschitz.get_or_init(|| est))
    }

    /// Cached value, if computed.
    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz.get().map(|l| l.value)
    }

    /// Sets the cached constant; ignored if already set.
    pub fn set_lipschitz(&self, value: f64) {
        let _ = self.lipschitz.set(LipschitzEstimate {
            value,
            converged: true,
        });
    }
}
