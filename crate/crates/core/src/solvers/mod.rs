//! Stochastic and deterministic Mirror-Prox, the Mirror-Descent baseline,
//! duality-gap evaluation and the repeat-and-select wrapper.

mod descent;
mod gap;
mod mirror_prox;
mod reliability;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{DenseSymMatrix, ProblemInstance};
use crate::prox::{diameter_sq, SetupConstants};

pub use descent::md_solve;
pub use gap::{duality_gap, objective_value, GapEstimate, GapEstimator, GapOptions};
pub use mirror_prox::{mp_solve, smp_solve};
pub use reliability::{reliability_wrapper, repeats_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Mirror-Prox with the randomized oracle.
    #[default]
    Smp,
    /// Mirror-Prox with exact matrix exponentials.
    Mp,
    /// Entropic Mirror-Descent on the primal variable.
    Md,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Smp => "smp",
            Method::Mp => "mp",
            Method::Md => "md",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smp" => Ok(Method::Smp),
            "mp" => Ok(Method::Mp),
            "md" => Ok(Method::Md),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: Method,
    /// Relative accuracy; the run stops once the gap is at most `eps * L`.
    pub eps: f64,
    /// Probes per oracle call.
    pub samples: usize,
    /// Truncation tolerance.
    pub rho: f64,
    pub gap_check_stride: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Multiplies the theoretical step size (clipped at the stability cap).
    pub step_scale: f64,
    pub kappa_scale: f64,
    pub samples_scale: f64,
    pub strict_truncation: bool,
    /// Independent runs for [`reliability_wrapper`].
    pub repeats: usize,
    /// When set, overrides `repeats` with `ceil(ln(1/beta))`.
    pub beta: Option<f64>,
    /// Relative tolerance for the power iterations of the gap and of `L`.
    pub power_tol: f64,
    /// Largest `n` for which gap estimates are rechecked with a dense
    /// eigendecomposition.
    pub dense_cap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Smp,
            eps: 2e-3,
            samples: 1,
            rho: 1e-3,
            gap_check_stride: 100,
            max_iter: 200_000,
            seed: 0,
            step_scale: 1.0,
            kappa_scale: 1.0,
            samples_scale: 1.0,
            strict_truncation: false,
            repeats: 1,
            beta: None,
            power_tol: 1e-7,
            dense_cap: 2000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return bad("eps must lie in (0, 1)");
        }
        if self.samples == 0 {
            return bad("samples must be at least 1");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if self.gap_check_stride == 0 {
            return bad("gap check stride must be at least 1");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1");
        }
        if !(self.step_scale > 0.0) || !self.step_scale.is_finite() {
            return bad("step_scale must be positive");
        }
        if !(self.kappa_scale > 0.0) || !(self.samples_scale > 0.0) {
            return bad("scale constants must be positive");
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b < 1.0) {
                return bad("beta must lie in (0, 1)");
            }
        }
        if !(self.power_tol > 0.0) {
            return bad("power_tol must be positive");
        }
        Ok(())
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }
}

/// Step size and derived counts for a given instance size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub gamma: f64,
    /// Theoretical sample size per oracle call.
    pub n_theory: usize,
    /// Iteration bound from the efficiency estimate (absolute constant 1).
    pub t_bound: u64,
    /// Whether `gamma` had to be clipped to the stability cap.
    pub clipped: bool,
    pub setup: SetupConstants,
}

/// Constant step `step_scale / (2 L sqrt(2 ln n ln m))`, the theoretical
/// sample size and the iteration bound.
pub fn schedule(m: usize, n: usize, l_op: f64, cfg: &SolverConfig) -> Result<Schedule> {
    cfg.validate()?;
    let setup = SetupConstants::new(m, n, l_op, cfg.kappa_scale)?;
    let (ln_m, ln_n) = (0.5 * diameter_sq(m), 0.5 * diameter_sq(n));
    let mut gamma = cfg.step_scale / (2.0 * l_op * (2.0 * ln_n * ln_m).sqrt());
    let cap = 1.0 / (std::f64::consts::SQRT_2 * setup.lipschitz_total);
    let clipped = gamma > cap * (1.0 + 1e-12);
    if clipped {
        log::warn!("step size {gamma:e} exceeds the stability cap {cap:e}; clipping");
        gamma = cap;
    }
    let n_theory = (cfg.samples_scale * ln_m * ln_m / (cfg.eps * ln_n.sqrt())).floor().max(1.0) as usize;
    let t_bound = ((ln_n + ln_m * ln_n.sqrt()) / cfg.eps).ceil() as u64;
    Ok(Schedule {
        gamma,
        n_theory,
        t_bound,
        clipped,
        setup,
    })
}

/// Truncation levels used over a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationStats {
    pub calls: u64,
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

impl TruncationStats {
    pub(crate) fn new() -> Self {
        TruncationStats {
            calls: 0,
            mean: 0.0,
            min: usize::MAX,
            max: 0,
        }
    }

    pub(crate) fn record(&mut self, j: usize) {
        self.calls += 1;
        self.mean += (j as f64 - self.mean) / self.calls as f64;
        self.min = self.min.min(j);
        self.max = self.max.max(j);
    }
}

/// Outcome of one independent run inside [`reliability_wrapper`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubrunSummary {
    pub seed: u64,
    pub iterations: usize,
    pub objective: f64,
    pub gap: f64,
    pub converged: bool,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: Method,
    pub n: usize,
    pub m: usize,
    pub samples: usize,
    pub seed: u64,
    pub final_x: Vec<f64>,
    pub final_y: DenseSymMatrix,
    /// `lambda_max(B + A(x)) + c^T x` at the averaged point.
    pub objective: f64,
    /// Last evaluated duality gap.
    pub gap: f64,
    /// Whether the last gap used an exact eigendecomposition.
    pub gap_exact: bool,
    pub iterations: usize,
    pub converged: bool,
    pub wallclock_s: f64,
    pub per_iteration_s: f64,
    pub oracle_calls: u64,
    /// Oracle calls that needed a fresh probe batch.
    pub oracle_retries: u64,
    pub flops_estimate: u64,
    pub j_history: Option<TruncationStats>,
    pub gap_history: Vec<(usize, f64)>,
    pub gamma: f64,
    pub lipschitz: f64,
    /// Iterations at which the linear growth bound on `||V_t||` failed.
    pub v_bound_violations: usize,
    pub subruns: Vec<SubrunSummary>,
}

impl RunReport {
    /// Copy with the wall-clock fields zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> RunReport {
        let mut r = self.clone();
        r.wallclock_s = 0.0;
        r.per_iteration_s = 0.0;
        r.subruns.iter_mut().for_each(|s| s.wallclock_s = 0.0);
        r
    }
}

/// Runs the configured method, repeating when `repeats > 1` or `beta` is set.
pub fn solve(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<RunReport> {
    cfg.validate()?;
    if repeats_for(cfg) > 1 {
        return reliability_wrapper(inst, cfg);
    }
    solve_once(inst, cfg)
}

pub(crate) fn solve_once(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<RunReport> {
    match cfg.method {
        Method::Smp => smp_solve(inst, cfg),
        Method::Mp => mp_solve(inst, cfg),
        Method::Md => md_solve(inst, cfg),
    }
}

/// Operator norm of the instance, computing it if not cached.
pub(crate) fn lipschitz_of(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<f64> {
    let est = inst.lipschitz_constant(cfg.power_tol)?;
    if !est.converged {
        log::warn!("operator norm estimate did not converge");
    }
    if !(est.value > 0.0) {
        return Err(Error::InvalidArgument("all matrices are zero".into()));
    }
    Ok(est.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_step_size() {
        let cfg = SolverConfig::default();
        let s = schedule(100, 100, 1.0, &cfg).unwrap();
        let ln100 = 100f64.ln();
        assert!((s.gamma - 1.0 / (2.0 * ln100 * 2f64.sqrt())).abs() < 1e-15);
        assert!((s.gamma - 0.07677).abs() < 5e-6);
        assert!(!s.clipped);
        assert!(s.gamma * 2f64.sqrt() * s.setup.lipschitz_total <= 1.0 + 1e-12);
    }

    #[test]
    fn theoretical_sample_size() {
        let s = schedule(100, 100, 1.0, &SolverConfig::default()).unwrap();
        assert_eq!(s.n_theory, 4941);
    }

    #[test]
    fn oversized_step_is_clipped() {
        let cfg = SolverConfig {
            step_scale: 3.0,
            ..SolverConfig::default()
        };
        let s = schedule(10, 20, 2.0, &cfg).unwrap();
        assert!(s.clipped);
        assert!(s.gamma * 2f64.sqrt() * s.setup.lipschitz_total <= 1.0 + 1e-12);
    }

    #[test]
    fn config_validation() {
        let ok = SolverConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            SolverConfig { eps: 0.0, ..ok.clone() },
            SolverConfig { eps: 1.0, ..ok.clone() },
            SolverConfig { samples: 0, ..ok.clone() },
            SolverConfig { gap_check_stride: 0, ..ok.clone() },
            SolverConfig { rho: 1.5, ..ok.clone() },
            SolverConfig { beta: Some(0.0), ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn method_names_round_trip() {
        for m in [Method::Smp, Method::Mp, Method::Md] {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("xx".parse::<Method>().is_err());
    }
}
