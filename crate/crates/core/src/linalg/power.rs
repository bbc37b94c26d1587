//! Power iteration for symmetric operators.

use crate::linalg::{Shifted, SymOperator};
use crate::rng;

/// Result of a power iteration.
#[derive(Debug, Clone)]
pub struct PowerEstimate {
    /// Rayleigh quotient of the returned vector.
    pub value: f64,
    /// `||A v||` for the returned unit vector; a lower bound on the spectral norm.
    pub magnitude: f64,
    /// Unit-norm iterate.
    pub vector: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Power iteration from a random start drawn from `seed`.
///
/// Stops once successive Rayleigh quotients and successive `||A v||` both
/// differ by at most `tol` relative to the current magnitude.
pub fn power_method<O: SymOperator + ?Sized>(
    op: &O,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> PowerEstimate {
    let mut r = rng::stream(seed, rng::POWER_START);
    let start = rng::gaussian_vector(&mut r, op.dim());
    power_method_from(op, &start, tol, max_iter)
}

/// Power iteration from a caller-provided start (warm start).
pub fn power_method_from<O: SymOperator + ?Sized>(
    op: &O,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> PowerEstimate {
    let n = op.dim();
    let mut v = start.to_vec();
    if normalize(&mut v) == 0.0 {
        v = vec![0.0; n];
        if n > 0 {
            v[0] = 1.0;
        }
    }
    let mut w = vec![0.0; n];
    let mut prev_rq = f64::NAN;
    let mut prev_mag = f64::NAN;
    let mut rq = 0.0;
    let mut mag = 0.0;
    for it in 1..=max_iter.max(1) {
        op.apply_into(&v, &mut w);
        rq = v.iter().zip(&w).map(|(a, b)| a * b).sum();
        mag = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if mag == 0.0 {
            return PowerEstimate {
                value: 0.0,
                magnitude: 0.0,
                vector: v,
                iterations: it,
                converged: true,
            };
        }
        let scale = mag.max(f64::MIN_POSITIVE);
        let done = (rq - prev_rq).abs() <= tol * scale && (mag - prev_mag).abs() <= tol * scale;
        if done {
            return PowerEstimate {
                value: rq,
                magnitude: mag,
                vector: v,
                iterations: it,
                converged: true,
            };
        }
        prev_rq = rq;
        prev_mag = mag;
        w.iter_mut().for_each(|x| *x /= mag);
        std::mem::swap(&mut v, &mut w);
    }
    PowerEstimate {
        value: rq,
        magnitude: mag,
        vector: v,
        iterations: max_iter,
        converged: false,
    }
}

/// Estimate of the maximal (signed) eigenvalue.
#[derive(Debug, Clone)]
pub struct LambdaMax {
    pub value: f64,
    pub vector: Vec<f64>,
    /// Spectral-norm estimate used as the shift.
    pub shift: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Two-phase shifted power method: estimate `s = |lambda|_max`, run on
/// `A + s I` (spectrum in `[0, 2s]`) and subtract `s` again.
pub fn lambda_max<O: SymOperator + ?Sized>(
    op: &O,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> LambdaMax {
    let norm = power_method(op, tol, max_iter, seed);
    lambda_max_shifted(op, norm.magnitude, &norm.vector, tol, max_iter, norm.iterations)
        .with_converged(norm.converged)
}

/// Second phase of [`lambda_max`] with a known bound `shift >= |lambda|_max`
/// (approximately) and a warm start.
pub fn lambda_max_from<O: SymOperator + ?Sized>(
    op: &O,
    shift: f64,
    start: &[f64],
    tol: f64,
    max_iter: usize,
) -> LambdaMax {
    lambda_max_shifted(op, shift, start, tol, max_iter, 0)
}

fn lambda_max_shifted<O: SymOperator + ?Sized>(
    op: &O,
    shift: f64,
    start: &[f64],
    tol: f64,
    max_iter: usize,
    spent: usize,
) -> LambdaMax {
    let shifted = Shifted {
        op,
        scale: 1.0,
        shift,
    };
    // tolerance is relative to the shifted magnitude (about 2s); rescale so
    // the absolute accuracy matches the unshifted request
    let est = power_method_from(&shifted, start, tol * 0.5, max_iter);
    LambdaMax {
        value: est.value - shift,
        vector: est.vector,
        shift,
        iterations: spent + est.iterations,
        converged: est.converged,
    }
}

impl LambdaMax {
    fn with_converged(mut self, first_phase: bool) -> Self {
        self.converged &= first_phase;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{DenseSymMatrix, SparseSymMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn dominant_diagonal() {
        let a = SparseSymMatrix::from_diagonal(&[3.0, 1.0]).unwrap();
        let est = power_method(&a, 1e-10, 1000, 1);
        assert!(est.converged);
        assert!((est.value - 3.0).abs() < 1e-9);
        let unit: f64 = est.vector.iter().map(|x| x * x).sum();
        assert!((unit - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shift_trick_targets_lambda_max() {
        let a = SparseSymMatrix::from_diagonal(&[-5.0, 2.0]).unwrap();
        let plain = power_method(&a, 1e-12, 1000, 1);
        assert!((plain.value + 5.0).abs() < 1e-8);
        let top = lambda_max(&a, 1e-12, 2000, 1);
        assert!((top.value - 2.0).abs() < 1e-8, "{}", top.value);
    }

    #[test]
    fn random_matrix_matches_dense_eigensolver() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DenseSymMatrix::from_upper_fn(20, |_, _| StandardNormal.sample(&mut rng));
        let exact = a.lambda_max_exact().unwrap();
        let est = lambda_max(&a, 1e-12, 20_000, 3);
        assert!((est.value - exact).abs() < 1e-6, "{} vs {}", est.value, exact);
    }

    #[test]
    fn known_gap_converges_within_500_iterations() {
        // spectrum {1.0, 0.9, 0.5, ...}: gap 0.1 at the top
        let diag: Vec<f64> = [1.0, 0.9, 0.5, 0.3, -0.2, 0.0].to_vec();
        let a = SparseSymMatrix::from_diagonal(&diag).unwrap();
        let est = lambda_max(&a, 1e-10, 500, 9);
        assert!((est.value - 1.0).abs() < 1e-6, "{}", est.value);
    }

    #[test]
    fn unconverged_is_flagged() {
        let a = SparseSymMatrix::from_diagonal(&[1.0, 0.999_999, 0.5]).unwrap();
        let est = power_method(&a, 1e-15, 3, 1);
        assert!(!est.converged);
        assert_eq!(est.iterations, 3);
    }

    #[test]
    fn zero_operator() {
        let a = SparseSymMatrix::from_diagonal(&[0.0, 0.0]).unwrap();
        let est = power_method(&a, 1e-10, 10, 1);
        assert_eq!(est.value, 0.0);
        assert!(est.converged);
    }
}
