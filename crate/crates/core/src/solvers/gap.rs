use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::linalg::{
    lambda_max, power_method_from, DenseSymMatrix, LambdaMax, ProblemInstance, Shifted, SymOperator,
};
use crate::prox::SimplexPoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapOptions {
    /// Gap estimates at or below this are recomputed exactly.
    pub threshold: f64,
    pub power_tol: f64,
    pub power_max_iter: usize,
    /// Largest dimension for the dense recheck.
    pub dense_cap: usize,
    pub seed: u64,
}

impl Default for GapOptions {
    fn default() -> Self {
        GapOptions {
            threshold: 0.0,
            power_tol: 1e-7,
            power_max_iter: 5000,
            dense_cap: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapEstimate {
    /// `primal - dual`.
    pub gap: f64,
    /// `lambda_max(B + A(x)) + c^T x`.
    pub primal: f64,
    /// `Tr(B Y) + min_j (Tr(A_j Y) + c_j)`.
    pub dual: f64,
    pub lambda_max: f64,
    /// `lambda_max` came from a dense eigendecomposition.
    pub exact: bool,
    /// The power iteration met its tolerance.
    pub power_converged: bool,
}

/// Duality gap evaluator; keeps the last leading eigenvector as a warm start.
#[derive(Debug, Clone)]
pub struct GapEstimator {
    opts: GapOptions,
    warm: Option<Vec<f64>>,
}

impl GapEstimator {
    pub fn new(opts: GapOptions) -> Self {
        GapEstimator { opts, warm: None }
    }

    pub fn options(&self) -> &GapOptions {
        &self.opts
    }

    pub fn set_threshold(&mut self, threshold: f64) {
        self.opts.threshold = threshold;
    }

    pub fn evaluate(
        &mut self,
        inst: &ProblemInstance,
        x: &SimplexPoint,
        y: &DenseSymMatrix,
    ) -> Result<GapEstimate> {
        check_dim(inst.n(), y.n())?;
        let a = inst.assemble_combination(x.weights())?;
        let o = &self.opts;
        let est = match &self.warm {
            None => lambda_max(&a, o.power_tol, o.power_max_iter, o.seed),
            Some(start) => warm_lambda_max(&a, start, o.power_tol, o.power_max_iter),
        };
        self.warm = Some(est.vector.clone());
        let c_term = inst.c_dot(x.weights());
        let grad = inst.primal_gradient(y)?;
        let dual = inst.b_dot(y) + grad.iter().copied().fold(f64::INFINITY, f64::min);
        let mut out = GapEstimate {
            gap: est.value + c_term - dual,
            primal: est.value + c_term,
            dual,
            lambda_max: est.value,
            exact: false,
            power_converged: est.converged,
        };
        let recheck = out.gap <= o.threshold || !est.converged;
        if recheck && inst.n() <= o.dense_cap {
            let exact = a.to_dense().eigen()?;
            let lm = exact.max();
            self.warm = Some(exact.top_vector());
            out.lambda_max = lm;
            out.primal = lm + c_term;
            out.gap = out.primal - dual;
            out.exact = true;
        }
        Ok(out)
    }
}

/// Two-phase shifted power iteration where both phases start from `start`.
pub(crate) fn warm_lambda_max<O: SymOperator + ?Sized>(
    op: &O,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> LambdaMax {
    let norm = power_method_from(op, start, tol, max_iter);
    // ||A v|| underestimates the norm; the margin keeps A + sI semidefinite
    let shift = 1.01 * norm.magnitude;
    let shifted = Shifted {
        op,
        scale: 1.0,
        shift,
    };
    let top = power_method_from(&shifted, start, 0.5 * tol, max_iter);
    LambdaMax {
        value: top.value - shift,
        vector: top.vector,
        shift,
        iterations: norm.iterations + top.iterations,
        converged: norm.converged && top.converged,
    }
}

/// `lambda_max(B + A(x)) + c^T x`, exact when `n <= opts.dense_cap`.
/// Returns the value and whether it is exact.
pub fn objective_value(inst: &ProblemInstance, x: &SimplexPoint, opts: &GapOptions) -> Result<(f64, bool)> {
    let a = inst.assemble_combination(x.weights())?;
    let c = inst.c_dot(x.weights());
    if inst.n() <= opts.dense_cap {
        return Ok((a.to_dense().lambda_max_exact()? + c, true));
    }
    let est = lambda_max(&a, opts.power_tol, opts.power_max_iter, opts.seed);
    Ok((est.value + c, false))
}

/// One-off gap evaluation, see [`GapEstimator`].
pub fn duality_gap(
    inst: &ProblemInstance,
    x: &SimplexPoint,
    y: &DenseSymMatrix,
    opts: &GapOptions,
) -> Result<GapEstimate> {
    GapEstimator::new(*opts).evaluate(inst, x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseSymMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_instance(n: usize, m: usize, seed: u64) -> ProblemInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mats = (0..m)
            .map(|_| {
                let trip: Vec<(usize, usize, f64)> = (0..n)
                    .flat_map(|i| (i..n).map(move |j| (i, j)))
                    .map(|(i, j)| (i, j, StandardNormal.sample(&mut rng)))
                    .collect();
                SparseSymMatrix::from_triplets(n, trip).unwrap()
            })
            .collect();
        ProblemInstance::new(mats, None, None).unwrap()
    }

    #[test]
    fn complementary_pair_has_zero_gap() {
        let inst = random_instance(6, 1, 1);
        let e = inst.matrix(0).to_dense().eigen().unwrap();
        let v = e.top_vector();
        let mut y = DenseSymMatrix::zeros(6);
        y.add_outer(1.0, &v);
        let g = duality_gap(&inst, &SimplexPoint::uniform(1), &y, &GapOptions::default()).unwrap();
        assert!(g.gap.abs() < 1e-8, "{}", g.gap);
    }

    #[test]
    fn uniform_dual_point() {
        let inst = random_instance(8, 4, 2);
        let x = SimplexPoint::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let y = DenseSymMatrix::identity(8).scaled(1.0 / 8.0);
        let g = duality_gap(&inst, &x, &y, &GapOptions::default()).unwrap();
        let lm = inst.assemble_combination(x.weights()).unwrap().to_dense().lambda_max_exact().unwrap();
        let min_tr = inst
            .matrices()
            .iter()
            .map(|a| a.to_dense().trace() / 8.0)
            .fold(f64::INFINITY, f64::min);
        assert!((g.gap - (lm - min_tr)).abs() < 1e-5 * lm.abs(), "{} vs {}", g.gap, lm - min_tr);
    }

    #[test]
    fn recheck_makes_gap_exact() {
        let inst = random_instance(8, 3, 3);
        let x = SimplexPoint::uniform(3);
        let y = DenseSymMatrix::identity(8).scaled(1.0 / 8.0);
        let opts = GapOptions {
            threshold: f64::INFINITY,
            ..GapOptions::default()
        };
        let g = duality_gap(&inst, &x, &y, &opts).unwrap();
        assert!(g.exact);
        let lm = inst.assemble_combination(x.weights()).unwrap().to_dense().lambda_max_exact().unwrap();
        assert_eq!(g.lambda_max, lm);
    }

    #[test]
    fn weak_duality_on_random_pairs() {
        let inst = random_instance(7, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut est = GapEstimator::new(GapOptions {
            threshold: f64::INFINITY,
            ..GapOptions::default()
        });
        for _ in 0..20 {
            let w: Vec<f64> = (0..4).map(|_| rand::Rng::random::<f64>(&mut rng) + 1e-3).collect();
            let x = SimplexPoint::from_unnormalized(w).unwrap();
            let v = DenseSymMatrix::from_upper_fn(7, |_, _| StandardNormal.sample(&mut rng));
            let y = crate::linalg::exact_density(&v).unwrap();
            assert!(est.evaluate(&inst, &x, &y).unwrap().gap >= -1e-12);
        }
    }
}
