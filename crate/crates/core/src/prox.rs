//! Entropy prox-mappings on the simplex and on the spectahedron, plus the
//! setup constants (diameters and Lipschitz constants) they induce.
//!
//! Primal points live in the interior of the probability simplex and are
//! updated by the closed-form entropic prox. Dual points are trace-one
//! positive definite matrices `Y = exp(V) / Tr(exp(V))`, carried through
//! their logarithm `V`; the exact prox is then `H(V - xi)` and the
//! stochastic path only ever adds matrices to `V`.
//!
//! Arguments `xi` passed to the prox functions are already scaled by the
//! step size and the squared diameter; the solver applies those factors.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{exact_density, DenseSymMatrix, SparseSymMatrix};

/// Smallest weight kept after a prox step so that `ln x_j` stays finite.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// Point in the relative interior of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexPoint {
    weights: Vec<f64>,
}

impl TryFrom<Vec<f64>> for SimplexPoint {
    type Error = Error;

    fn try_from(w: Vec<f64>) -> Result<Self> {
        SimplexPoint::new(w)
    }
}

impl From<SimplexPoint> for Vec<f64> {
    fn from(p: SimplexPoint) -> Self {
        p.weights
    }
}

impl SimplexPoint {
    /// Validates positivity, finiteness and `|sum - 1| <= 1e-12`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("empty simplex point".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("simplex weights"));
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::InvalidArgument("simplex weights must be positive".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("simplex weights sum to {sum}")));
        }
        Ok(SimplexPoint { weights })
    }

    /// Normalizes nonnegative weights, flooring at [`WEIGHT_FLOOR`].
    pub fn from_unnormalized(mut weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        floor_weights(&mut weights);
        Ok(SimplexPoint { weights })
    }

    /// The entropy center `(1/m, ..., 1/m)`.
    pub fn uniform(m: usize) -> Self {
        SimplexPoint {
            weights: vec![1.0 / m as f64; m],
        }
    }

    pub fn m(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }
}

fn floor_weights(w: &mut [f64]) {
    if w.iter().any(|&v| v < WEIGHT_FLOOR) {
        w.iter_mut().for_each(|v| *v += WEIGHT_FLOOR);
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
    }
}

/// `sum_j x_j ln x_j`.
pub fn simplex_entropy(x: &[f64]) -> f64 {
    x.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum()
}

/// `sum_i lambda_i ln lambda_i` over the eigenvalues of `y`.
pub fn matrix_entropy(y: &DenseSymMatrix) -> Result<f64> {
    let e = y.eigen()?;
    Ok(e.values.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum())
}

/// Entropic prox on the simplex:
/// `w_j = exp(ln x_j - xi_j) / sum_l exp(ln x_l - xi_l)`, evaluated in log
/// space with the maximum subtracted.
pub fn simplex_entropy_prox(x: &SimplexPoint, xi: &[f64]) -> Result<SimplexPoint> {
    check_dim(x.m(), xi.len())?;
    if xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("prox argument"));
    }
    let mut logits: Vec<f64> = x.weights.iter().zip(xi).map(|(w, g)| w.ln() - g).collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in &mut logits {
        *l = (*l - top).exp();
        sum += *l;
    }
    logits.iter_mut().for_each(|w| *w /= sum);
    floor_weights(&mut logits);
    Ok(SimplexPoint { weights: logits })
}

/// Exact entropic prox on the spectahedron for `Y = H(v_bar)`:
/// returns `H(v_bar - xi)`. Costs one dense eigendecomposition.
pub fn spectahedron_entropy_prox_exact(
    v_bar: &DenseSymMatrix,
    xi: &DenseSymMatrix,
) -> Result<DenseSymMatrix> {
    check_dim(v_bar.n(), xi.n())?;
    let mut v = v_bar.clone();
    v.add_scaled(-1.0, xi);
    exact_density(&v)
}

/// Log-domain representation of a dual point, `Y = exp(V) / Tr(exp(V))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectahedronLog {
    v: DenseSymMatrix,
}

impl SpectahedronLog {
    /// `V = 0`, i.e. `Y = I / n`.
    pub fn center(n: usize) -> Self {
        SpectahedronLog {
            v: DenseSymMatrix::zeros(n),
        }
    }

    pub fn from_log(v: DenseSymMatrix) -> Result<Self> {
        if !v.is_finite() {
            return Err(Error::NonFinite("log-domain matrix"));
        }
        Ok(SpectahedronLog { v })
    }

    pub fn n(&self) -> usize {
        self.v.n()
    }

    pub fn log(&self) -> &DenseSymMatrix {
        &self.v
    }

    /// `V += step * direction`.
    pub fn add_dense(&mut self, step: f64, direction: &DenseSymMatrix) {
        self.v.add_scaled(step, direction);
    }

    /// `V += step * direction` for a sparse direction.
    pub fn add_sparse(&mut self, step: f64, direction: &SparseSymMatrix) {
        self.v.add_sparse(step, direction);
    }

    /// Materializes `Y` (dense eigendecomposition).
    pub fn density(&self) -> Result<DenseSymMatrix> {
        exact_density(&self.v)
    }
}

/// `V' = V + gamma * Omega_Y^2 * direction`, with `Omega_Y^2 = 2 ln n`.
pub fn log_domain_update(
    v: &SpectahedronLog,
    gamma: f64,
    direction: &DenseSymMatrix,
) -> Result<SpectahedronLog> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!("step must be positive, got {gamma}")));
    }
    check_dim(v.n(), direction.n())?;
    let omega_y_sq = diameter_sq(v.n());
    let mut out = v.clone();
    out.add_dense(gamma * omega_y_sq, direction);
    Ok(out)
}

/// `2 ln d`, with `d` floored at 2 so the one-dimensional case stays usable.
pub fn diameter_sq(d: usize) -> f64 {
    2.0 * (d.max(2) as f64).ln()
}

/// Diameters, regularity constant and Lipschitz constants of the
/// simplex x spectahedron setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetupConstants {
    /// `sqrt(2 ln m)`.
    pub omega_x: f64,
    /// `sqrt(2 ln n)`.
    pub omega_y: f64,
    /// Regularity constant of `(R^m, ||.||_inf)`: `kappa_scale * ln m`.
    pub kappa: f64,
    /// Operator norm `max_j ||A_j||`.
    pub lipschitz_op: f64,
    /// `omega_x * omega_y * lipschitz_op`.
    pub lipschitz_total: f64,
}

impl SetupConstants {
    pub fn new(m: usize, n: usize, lipschitz_op: f64, kappa_scale: f64) -> Result<Self> {
        if !(lipschitz_op > 0.0) || !lipschitz_op.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "operator norm must be positive, got {lipschitz_op}"
            )));
        }
        if !(kappa_scale > 0.0) {
            return Err(Error::InvalidArgument("kappa scale must be positive".into()));
        }
        let omega_x = diameter_sq(m).sqrt();
        let omega_y = diameter_sq(n).sqrt();
        Ok(SetupConstants {
            omega_x,
            omega_y,
            kappa: kappa_scale * (m.max(2) as f64).ln(),
            lipschitz_op,
            lipschitz_total: omega_x * omega_y * lipschitz_op,
        })
    }

    pub fn omega_x_sq(&self) -> f64 {
        self.omega_x * self.omega_x
    }

    pub fn omega_y_sq(&self) -> f64 {
        self.omega_y * self.omega_y
    }
}
