//! The Mirror-Prox loop, shared by the randomized and the exact variant.

use std::time::Instant;

use crate::error::Result;
use crate::linalg::{density_from_eigen, power_method, DenseSymMatrix, ProblemInstance};
use crate::oracle::{OracleConfig, SketchOracle, TruncationRule};
use crate::prox::{simplex_entropy_prox, SimplexPoint, SpectahedronLog};
use crate::rng;
use crate::solvers::{
    lipschitz_of, schedule, GapEstimate, GapEstimator, GapOptions, Method, RunReport, SolverConfig,
    TruncationStats,
};

/// Gradient estimate at a dual point.
struct Answer {
    g: Vec<f64>,
    j: Option<usize>,
    flops: u64,
    retried: bool,
    /// Estimate of `||V||`, for the growth check.
    extent: f64,
}

trait DualOracle {
    fn gradient(&mut self, inst: &ProblemInstance, v: &SpectahedronLog, t: u64) -> Result<Answer>;

    fn gradient_with_density(
        &mut self,
        inst: &ProblemInstance,
        v: &SpectahedronLog,
        t: u64,
    ) -> Result<(Answer, DenseSymMatrix)>;
}

struct Randomized(SketchOracle);

impl Randomized {
    fn answer(out: crate::oracle::OracleOutput) -> (Answer, Option<DenseSymMatrix>) {
        let extent = out
            .spectrum
            .map_or(0.0, |s| s.lambda_max.abs().max(s.lambda_min.abs()));
        (
            Answer {
                g: out.g_hat,
                j: Some(out.j_used),
                flops: out.flops_estimate,
                retried: out.attempts > 1,
                extent,
            },
            out.h_hat,
        )
    }
}

impl DualOracle for Randomized {
    fn gradient(&mut self, inst: &ProblemInstance, v: &SpectahedronLog, t: u64) -> Result<Answer> {
        let out = self.0.query(v.log(), inst, t, 0, false)?;
        Ok(Self::answer(out).0)
    }

    fn gradient_with_density(
        &mut self,
        inst: &ProblemInstance,
        v: &SpectahedronLog,
        t: u64,
    ) -> Result<(Answer, DenseSymMatrix)> {
        let out = self.0.query(v.log(), inst, t, 1, true)?;
        let (a, h) = Self::answer(out);
        Ok((a, h.expect("density requested")))
    }
}

/// Exact `A^*(H(V)) + c` through a dense eigendecomposition.
struct Exact;

impl Exact {
    fn eval(inst: &ProblemInstance, v: &SpectahedronLog) -> Result<(Answer, DenseSymMatrix)> {
        let e = v.log().eigen()?;
        let h = density_from_eigen(&e);
        let n = inst.n() as u64;
        let answer = Answer {
            g: inst.primal_gradient(&h)?,
            j: None,
            flops: 12 * n * n * n,
            retried: false,
            extent: e.max().abs().max(e.min().abs()),
        };
        Ok((answer, h))
    }
}

impl DualOracle for Exact {
    fn gradient(&mut self, inst: &ProblemInstance, v: &SpectahedronLog, _t: u64) -> Result<Answer> {
        Ok(Self::eval(inst, v)?.0)
    }

    fn gradient_with_density(
        &mut self,
        inst: &ProblemInstance,
        v: &SpectahedronLog,
        _t: u64,
    ) -> Result<(Answer, DenseSymMatrix)> {
        Self::eval(inst, v)
    }
}

/// Mirror-Prox with the randomized oracle: two sketched oracle calls per
/// iteration, the dual kept in log form.
pub fn smp_solve(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<RunReport> {
    cfg.validate()?;
    let oracle_cfg = OracleConfig {
        samples: cfg.samples,
        rho: cfg.rho,
        rule: if cfg.strict_truncation {
            TruncationRule::Strict
        } else {
            TruncationRule::Experimental
        },
    };
    let oracle = Randomized(SketchOracle::new(inst.n(), oracle_cfg, cfg.seed)?);
    run(inst, cfg, Method::Smp, oracle)
}

/// Mirror-Prox with exact matrix exponentials.
pub fn mp_solve(inst: &ProblemInstance, cfg: &SolverConfig) -> Result<RunReport> {
    cfg.validate()?;
    run(inst, cfg, Method::Mp, Exact)
}

fn run<O: DualOracle>(
    inst: &ProblemInstance,
    cfg: &SolverConfig,
    method: Method,
    mut oracle: O,
) -> Result<RunReport> {
    let start = Instant::now();
    let (n, m) = (inst.n(), inst.m());
    let l_op = lipschitz_of(inst, cfg)?;
    let sched = schedule(m, n, l_op, cfg)?;
    let gamma = sched.gamma;
    let step_x = gamma * sched.setup.omega_x_sq();
    let step_y = gamma * sched.setup.omega_y_sq();
    let b_norm = inst
        .b()
        .map_or(0.0, |b| power_method(b, cfg.power_tol, 20_000, cfg.seed).magnitude);
    // ||V_t|| <= t * gamma * Omega_Y^2 * (L + ||B||); slack for the estimated norms
    let growth = step_y * (l_op + b_norm) * (1.0 + 1e-6);
    let threshold = cfg.eps * l_op;
    let mut gap_est = GapEstimator::new(GapOptions {
        threshold,
        power_tol: cfg.power_tol,
        power_max_iter: 5000,
        dense_cap: cfg.dense_cap,
        seed: rng::derive_seed(cfg.seed, 0x9a9),
    });

    let mut x = SimplexPoint::uniform(m);
    let mut v = SpectahedronLog::center(n);
    let mut x_sum = vec![0.0; m];
    let mut h_sum = DenseSymMatrix::zeros(n);
    let mut history = Vec::new();
    let mut j_stats = TruncationStats::new();
    let (mut calls, mut retries, mut flops, mut violations) = (0u64, 0u64, 0u64, 0usize);
    let mut last: Option<(GapEstimate, SimplexPoint, DenseSymMatrix)> = None;
    let mut converged = false;
    let mut t = 0;

    let mut tally = |a: &Answer, bound: f64| {
        calls += 1;
        flops += a.flops;
        retries += u64::from(a.retried);
        if let Some(j) = a.j {
            j_stats.record(j);
        }
        if a.extent > bound + 1e-12 {
            violations += 1;
            log::error!("log-iterate norm {} exceeds growth bound {}", a.extent, bound);
        }
    };

    while t < cfg.max_iter {
        t += 1;
        let tf = t as f64;
        let first = oracle.gradient(inst, &v, t as u64)?;
        tally(&first, growth * (tf - 1.0));
        let xi: Vec<f64> = first.g.iter().map(|g| step_x * g).collect();
        let x_bar = simplex_entropy_prox(&x, &xi)?;

        let mut v_bar = v.clone();
        v_bar.add_sparse(step_y, &inst.assemble_combination(x.weights())?);
        let (second, h) = oracle.gradient_with_density(inst, &v_bar, t as u64)?;
        tally(&second, growth * tf);
        let xi: Vec<f64> = second.g.iter().map(|g| step_x * g).collect();
        x = simplex_entropy_prox(&x, &xi)?;
        v.add_sparse(step_y, &inst.assemble_combination(x_bar.weights())?);

        x_sum.iter_mut().zip(x_bar.weights()).for_each(|(s, w)| *s += w);
        h_sum.add_scaled(1.0, &h);

        if t % cfg.gap_check_stride == 0 || t == cfg.max_iter {
            let xa = SimplexPoint::from_unnormalized(x_sum.clone())?;
            let ya = h_sum.scaled(1.0 / tf);
            debug_assert!((ya.trace() - 1.0).abs() < 1e-9);
            let g = gap_est.evaluate(inst, &xa, &ya)?;
            history.push((t, g.gap));
            log::debug!("{method} t={t} gap={:.6e} threshold={threshold:.6e}", g.gap);
            let done = g.gap <= threshold && (g.exact || n > cfg.dense_cap);
            last = Some((g, xa, ya));
            if done {
                converged = true;
                break;
            }
        }
    }

    let (g, xa, ya) = last.expect("at least one gap evaluation");
    let wall = start.elapsed().as_secs_f64();
    Ok(RunReport {
        method,
        n,
        m,
        samples: if method == Method::Smp { cfg.samples } else { 0 },
        seed: cfg.seed,
        final_x: xa.into_weights(),
        final_y: ya,
        objective: g.primal,
        gap: g.gap,
        gap_exact: g.exact,
        iterations: t,
        converged,
        wallclock_s: wall,
        per_iteration_s: wall / t as f64,
        oracle_calls: calls,
        oracle_retries: retries,
        flops_estimate: flops,
        j_history: (j_stats.calls > 0).then_some(j_stats),
        gap_history: history,
        gamma,
        lipschitz: l_op,
        v_bound_violations: violations,
        subruns: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::SparseSymMatrix;

    fn two_diagonals() -> ProblemInstance {
        ProblemInstance::new(
            vec![
                SparseSymMatrix::from_diagonal(&[1.0, 0.0]).unwrap(),
                SparseSymMatrix::from_diagonal(&[0.0, 1.0]).unwrap(),
            ],
            None,
            None,
        )
        .unwrap()
    }

    fn cfg(method: Method, seed: u64) -> SolverConfig {
        SolverConfig {
            method,
            eps: 0.05,
            seed,
            max_iter: 20_000,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn symmetric_instance_optimum() {
        let inst = two_diagonals();
        for method in [Method::Smp, Method::Mp] {
            let r = crate::solvers::solve(&inst, &cfg(method, 3)).unwrap();
            assert!(r.converged, "{method}");
            assert!((r.objective - 0.5).abs() <= 0.05, "{method}: {}", r.objective);
            assert!((r.final_x[0] - 0.5).abs() < 0.1);
            assert!(r.gap_exact);
            assert_eq!(r.v_bound_violations, 0);
        }
    }

    #[test]
    fn singleton_simplex() {
        let a = SparseSymMatrix::from_diagonal(&[3.0, 1.0, -2.0]).unwrap();
        let inst = ProblemInstance::new(vec![a], None, None).unwrap();
        for method in [Method::Smp, Method::Mp] {
            let r = crate::solvers::solve(&inst, &cfg(method, 1)).unwrap();
            assert_eq!(r.final_x, vec![1.0]);
            assert!((r.objective - 3.0).abs() < 1e-12);
            assert!(r.converged);
            assert!(r.gap <= 0.05 * 3.0);
        }
    }

    #[test]
    fn identical_config_gives_identical_report() {
        let inst = two_diagonals();
        let c = cfg(Method::Smp, 9);
        let a = smp_solve(&inst, &c).unwrap();
        let b = smp_solve(&inst, &c).unwrap();
        assert_eq!(a.without_timing(), b.without_timing());
    }
}
