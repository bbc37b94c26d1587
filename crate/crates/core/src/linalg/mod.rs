//! Sparse and dense symmetric matrices, the problem data, and the shared
//! linear-algebra kernels.

mod dense;
mod power;
mod problem;
mod sparse;

pub use dense::{density_from_eigen, exact_density, DenseSymMatrix, SymEigen};
pub use power::{lambda_max, lambda_max_from, power_method, power_method_from, LambdaMax, PowerEstimate};
pub use problem::{InstanceMeta, LipschitzEstimate, ProblemInstance};
pub use sparse::{Pattern, SparseSymMatrix};

/// A symmetric linear map on `R^n`.
pub trait SymOperator: Sync {
    fn dim(&self) -> usize;

    /// Writes `A x` into `y` (overwriting it).
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }
}

/// `scale * A + shift * I`.
pub struct Shifted<'a, O: SymOperator + ?Sized> {
    pub op: &'a O,
    pub scale: f64,
    pub shift: f64,
}

impl<O: SymOperator + ?Sized> SymOperator for Shifted<'_, O> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.op.apply_into(x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = self.scale * *yi + self.shift * xi;
        }
    }
}
