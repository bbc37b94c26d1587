//! Self-check suites behind `eigprox verify`, and the reference minimizers
//! the prox suite compares against.

use std::f64::consts::E;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::instances::{generate, GeneratorSpec};
use crate::linalg::{DenseSymMatrix, ProblemInstance, SparseSymMatrix};
use crate::oracle::{bias_deviation_probe, sample_oracle_shifted, taylor_exp_half_apply, ProbeBatch};
use crate::prox::{simplex_entropy_prox, spectahedron_entropy_prox_exact, SimplexPoint};
use crate::rng;
use crate::solvers::{duality_gap, GapOptions};

/// Deliberate defects for checking that the suites can fail.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Prox steps move along `+xi` instead of `-xi`.
    ProxSignFlip,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Worst observed value of the suite's error measure.
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
    pub elapsed_s: f64,
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn random_sym(n: usize, rng: &mut impl Rng) -> DenseSymMatrix {
    DenseSymMatrix::from_upper_fn(n, |_, _| normal(rng))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs_entry(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Minimizes `<xi, w> + sum_i w_i ln(w_i / x_i)` over the simplex by damped
/// Newton steps on the affine constraint `sum w = 1`.
pub fn newton_simplex_prox(x: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
    if x.len() != xi.len() || x.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("need a positive x and matching xi".into()));
    }
    let f = |w: &[f64]| -> f64 {
        w.iter()
            .zip(x)
            .zip(xi)
            .map(|((&wi, &xi_), &g)| g * wi + wi * (wi / xi_).ln())
            .sum()
    };
    let mut w = x.to_vec();
    for _ in 0..500 {
        let grad: Vec<f64> = w
            .iter()
            .zip(x)
            .zip(xi)
            .map(|((&wi, &xi_), &g)| g + (wi / xi_).ln() + 1.0)
            .collect();
        let nu: f64 = w.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
        let d: Vec<f64> = w.iter().zip(&grad).map(|(wi, g)| wi * (nu - g)).collect();
        let slope: f64 = grad.iter().zip(&d).map(|(g, di)| g * di).sum();
        if -slope < 1e-30 {
            break;
        }
        let f0 = f(&w);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = w.iter().zip(&d).map(|(wi, di)| wi + alpha * di).collect();
            if trial.iter().all(|&v| v > 0.0) && f(&trial) <= f0 + 0.25 * alpha * slope {
                w = trial;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-20 {
                return Ok(w);
            }
        }
    }
    Ok(w)
}

/// Minimizes `<xi, Y> + Tr(Y ln Y) - <v_bar, Y>` over trace-one positive
/// definite `Y` by damped Newton steps. The Hessian of `Tr(Y ln Y)` acts on
/// a direction through the divided differences of `ln` in the eigenbasis of
/// `Y`.
pub fn newton_spectahedron_prox(v_bar: &DenseSymMatrix, xi: &DenseSymMatrix) -> Result<DenseSymMatrix> {
    let n = v_bar.n();
    let g_lin = xi.as_matrix() - v_bar.as_matrix();
    let f = |vals: &[f64], y: &DMatrix<f64>| -> f64 {
        vals.iter().map(|&l| l * l.ln()).sum::<f64>() + g_lin.dot(y)
    };
    let mut y = DMatrix::identity(n, n) / n as f64;
    for _ in 0..500 {
        let e = DenseSymMatrix::symmetrized(y.clone()).eigen()?;
        let (lam, u) = (&e.values, &e.vectors);
        let log_y = u * DMatrix::from_diagonal(&lam.iter().map(|l| l.ln()).collect::<Vec<_>>().into()) * u.transpose();
        let grad = log_y + DMatrix::identity(n, n) + &g_lin;
        let gt = u.transpose() * &grad * u;
        let nu: f64 = (0..n).map(|i| gt[(i, i)] * lam[i]).sum::<f64>() / lam.iter().sum::<f64>();
        let mut dt = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let inv_gamma = if i == j {
                    lam[i]
                } else if (lam[i] - lam[j]).abs() <= 1e-14 * lam[i].max(lam[j]) {
                    0.5 * (lam[i] + lam[j])
                } else {
                    (lam[i] - lam[j]) / (lam[i].ln() - lam[j].ln())
                };
                let rhs = if i == j { nu - gt[(i, j)] } else { -gt[(i, j)] };
                dt[(i, j)] = rhs * inv_gamma;
            }
        }
        let d = u * dt * u.transpose();
        let slope = grad.dot(&d);
        if -slope < 1e-30 {
            break;
        }
        let f0 = f(lam, &y);
        let mut alpha = 1.0;
        loop {
            let trial = &y + alpha * &d;
            let te = DenseSymMatrix::symmetrized(trial.clone()).eigen()?;
            if te.min() > 0.0 && f(&te.values, &trial) <= f0 + 0.25 * alpha * slope {
                y = trial;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-20 {
                return Ok(DenseSymMatrix::symmetrized(y));
            }
        }
    }
    Ok(DenseSymMatrix::symmetrized(y))
}

/// Closed-form prox answers against [`newton_simplex_prox`] and
/// [`newton_spectahedron_prox`] on random cases with `m, n <= 10`.
pub fn prox_suite(cases: usize, seed: u64, fault: Fault) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rng = rng::stream(seed, rng::VERIFY);
    let sign = if fault == Fault::ProxSignFlip { -1.0 } else { 1.0 };
    let tol = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let m = rng.random_range(2..=10);
        let x = SimplexPoint::from_unnormalized((0..m).map(|_| rng.random_range(0.05..1.0)).collect())?;
        let scale = rng.random_range(0.1..4.0);
        let xi: Vec<f64> = (0..m).map(|_| scale * normal(&mut rng)).collect();
        let flipped: Vec<f64> = xi.iter().map(|v| sign * v).collect();
        let closed = simplex_entropy_prox(&x, &flipped)?;
        let reference = newton_simplex_prox(x.weights(), &xi)?;
        worst = worst.max(sup_diff(closed.weights(), &reference));
    }
    for _ in 0..cases {
        let n = rng.random_range(2..=10);
        let v_bar = random_sym(n, &mut rng);
        let mut xi = random_sym(n, &mut rng);
        xi.scale(rng.random_range(0.1..2.0));
        let closed = spectahedron_entropy_prox_exact(&v_bar, &xi.scaled(sign))?;
        let reference = newton_spectahedron_prox(&v_bar, &xi)?;
        worst = worst.max(max_abs_entry(&(closed.as_matrix() - reference.as_matrix())));
    }
    Ok(SuiteReport {
        name: "prox",
        passed: worst <= tol,
        cases: 2 * cases,
        worst,
        tolerance: tol,
        detail: format!("max entry difference to the Newton reference {worst:.3e}"),
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

/// Spectral norm of `exp(W) - sum_{k<=J} W^k / k!`, from the eigenvalues
/// of `W` and the series tail (no cancellation).
pub fn taylor_remainder_norm(w: &DenseSymMatrix, j: usize) -> Result<f64> {
    let e = w.eigen()?;
    Ok(e.values.iter().map(|&l| scalar_tail(l, j).abs()).fold(0.0, f64::max))
}

fn scalar_tail(l: f64, j: usize) -> f64 {
    let mut term = 1.0;
    for k in 1..=j {
        term *= l / k as f64;
    }
    let mut sum = 0.0;
    for k in j + 1..j + 400 {
        term *= l / k as f64;
        sum += term;
        if term.abs() <= 1e-300_f64.max(sum.abs() * 1e-18) {
            break;
        }
    }
    sum
}

/// Truncated Taylor series of `exp(W)` with `J = ceil(e^2 ||W||)` on random
/// `W` (`n <= 10`, `||W|| <= 5`).
///
/// Two checks per case: the remainder is at most `e^-J`, and the series as
/// evaluated by the oracle's recursion matches the polynomial to rounding.
/// A direct `exp(W) - P` comparison cannot resolve `e^-J` in double
/// precision once `||W||` exceeds about 4, hence the split.
pub fn truncation_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rng = rng::stream(seed, rng::VERIFY + 1);
    let (mut worst_ratio, mut worst_eval): (f64, f64) = (0.0, 0.0);
    let mut ok = true;
    for _ in 0..cases {
        let n = rng.random_range(1..=10);
        let mut w = random_sym(n, &mut rng);
        let norm = w.spectral_norm_exact()?;
        let target = rng.random_range(0.0..5.0);
        if norm > 0.0 {
            w.scale(target / norm);
        }
        let norm_w = w.spectral_norm_exact()?;
        let j = ((E * E * norm_w).ceil() as usize).max(1);
        let rem = taylor_remainder_norm(&w, j)?;
        let bound = (-(j as f64)).exp();
        worst_ratio = worst_ratio.max(rem / bound);
        ok &= rem <= bound;

        // the recursion expands exp(V/2), so V = 2W
        let v = w.scaled(2.0);
        let mut p = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut e_c = vec![0.0; n];
            e_c[c] = 1.0;
            p.set_column(c, &DMatrix::from_vec(n, 1, taylor_exp_half_apply(&v, &e_c, j)).column(0));
        }
        let eig = w.eigen()?;
        let poly: Vec<f64> = eig.values.iter().map(|&l| l.exp() - scalar_tail(l, j)).collect();
        let reference = &eig.vectors * DMatrix::from_diagonal(&poly.into()) * eig.vectors.transpose();
        let err = (p - reference).norm() / norm_w.exp();
        worst_eval = worst_eval.max(err);
        ok &= err <= 1e-12;
    }
    Ok(SuiteReport {
        name: "truncation",
        passed: ok,
        cases,
        worst: worst_ratio,
        tolerance: 1.0,
        detail: format!(
            "max remainder / e^-J = {worst_ratio:.3e}; series evaluation error / e^||W|| = {worst_eval:.3e}"
        ),
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

// pattern and value draws interleave, which filter + map cannot express
#[allow(clippy::filter_map_bool_then)]
fn random_instance(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<ProblemInstance> {
    let mats = (0..m)
        .map(|_| {
            let trip: Vec<(usize, usize, f64)> = (0..n)
                .flat_map(|i| (i..n).map(move |j| (i, j)))
                .filter_map(|(i, j)| (i + j == 0 || rng.random_bool(0.4)).then(|| (i, j, normal(rng))))
                .collect();
            SparseSymMatrix::from_triplets(n, trip)
        })
        .collect::<Result<Vec<_>>>()?;
    let c: Vec<f64> = (0..m).map(|_| normal(rng)).collect();
    ProblemInstance::new(mats, None, Some(c))
}

/// Structure of the density-returning oracle: `H` is positive semidefinite
/// with unit trace and the gradient equals `A^*(H) + c`; the gradient-only
/// path returns the same vector.
pub fn oracle_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rng = rng::stream(seed, rng::VERIFY + 2);
    let (mut worst_trace, mut worst_rel, mut worst_neg): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for case in 0..cases {
        let n = rng.random_range(2..=12);
        let m = rng.random_range(1..=6);
        let inst = random_instance(n, m, &mut rng)?;
        let mut v = random_sym(n, &mut rng);
        v.scale(rng.random_range(0.1..6.0));
        let samples = rng.random_range(1..=40);
        let shift = 0.5 * (v.lambda_max_exact()? - v.scaled(-1.0).lambda_max_exact()?);
        let batch = ProbeBatch::new(samples, seed, case as u64)?;
        let j = rng.random_range(4..=30);
        let with = sample_oracle_shifted(&v, shift, &inst, &batch, j, true)?;
        let without = sample_oracle_shifted(&v, shift, &inst, &batch, j, false)?;
        let h = with.h_hat.expect("density requested");
        worst_trace = worst_trace.max((h.trace() - 1.0).abs());
        worst_neg = worst_neg.max(-h.eigen()?.min());
        let mut reference = inst.adjoint_apply(&h)?;
        for (r, c) in reference.iter_mut().zip(inst.c().unwrap_or(&[])) {
            *r += c;
        }
        let scale = reference.iter().map(|v| v.abs()).fold(1.0, f64::max);
        worst_rel = worst_rel
            .max(sup_diff(&with.g_hat, &reference) / scale)
            .max(sup_diff(&without.g_hat, &reference) / scale);
    }
    let passed = worst_trace <= 1e-10 && worst_rel <= 1e-12 && worst_neg <= 1e-12;
    Ok(SuiteReport {
        name: "oracle",
        passed,
        cases,
        worst: worst_rel,
        tolerance: 1e-12,
        detail: format!(
            "max |Tr H - 1| = {worst_trace:.2e}; most negative eigenvalue {:.2e}; max relative gradient error {worst_rel:.2e}",
            -worst_neg
        ),
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

/// Duality gap at random feasible pairs, with an exact eigendecomposition,
/// is nonnegative; at a known saddle point it vanishes.
pub fn gap_suite(cases: usize, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let mut rng = rng::stream(seed, rng::VERIFY + 3);
    let opts = GapOptions {
        threshold: f64::INFINITY,
        ..GapOptions::default()
    };
    let mut most_negative: f64 = 0.0;
    for _ in 0..cases {
        let n = rng.random_range(2..=12);
        let m = rng.random_range(1..=6);
        let inst = random_instance(n, m, &mut rng)?;
        let x = SimplexPoint::from_unnormalized((0..m).map(|_| rng.random_range(0.01..1.0)).collect())?;
        let y = crate::linalg::exact_density(&random_sym(n, &mut rng).scaled(rng.random_range(0.0..5.0)))?;
        let g = duality_gap(&inst, &x, &y, &opts)?;
        let scale = g.primal.abs().max(g.dual.abs()).max(1.0);
        most_negative = most_negative.min(g.gap / scale);
    }
    let saddle = ProblemInstance::new(
        vec![
            SparseSymMatrix::from_diagonal(&[1.0, 0.0])?,
            SparseSymMatrix::from_diagonal(&[0.0, 1.0])?,
        ],
        None,
        None,
    )?;
    let at_saddle = duality_gap(
        &saddle,
        &SimplexPoint::uniform(2),
        &DenseSymMatrix::identity(2).scaled(0.5),
        &opts,
    )?
    .gap;
    let passed = most_negative >= -1e-12 && at_saddle.abs() <= 1e-12;
    Ok(SuiteReport {
        name: "gap",
        passed,
        cases: cases + 1,
        worst: -most_negative,
        tolerance: 1e-12,
        detail: format!("most negative relative gap {most_negative:.2e}; gap at a known saddle point {at_saddle:.2e}"),
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

/// Sample sizes and repetitions of the bias/deviation experiment.
pub const BIAS_GRID: [usize; 4] = [32, 64, 128, 256];

/// Bias and deviation of the oracle against the probe count on a fixed
/// generated instance: fitted log-log slopes at most `-0.7` (bias) and in
/// `[-0.8, -0.2]` (deviation).
pub fn bias_suite(reps: usize, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let (inst, v) = bias_setting(seed)?;
    let table = bias_deviation_probe(&v, &inst, &BIAS_GRID, reps, seed)?;
    let bias = table.paired_bias_slope.unwrap_or(f64::NAN);
    let dev = table.deviation_slope.unwrap_or(f64::NAN);
    let passed = bias <= -0.7 && (-0.8..=-0.2).contains(&dev);
    Ok(SuiteReport {
        name: "bias",
        passed,
        cases: reps * BIAS_GRID.len(),
        worst: bias,
        tolerance: -0.7,
        detail: format!(
            "bias slope {bias:.3} (<= -0.7), deviation slope {dev:.3} (in [-0.8, -0.2]), raw bias slope {:.3}",
            table.bias_slope.unwrap_or(f64::NAN)
        ),
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

/// Instance and log-domain point used by [`bias_suite`].
pub fn bias_setting(seed: u64) -> Result<(ProblemInstance, DenseSymMatrix)> {
    let inst = generate(&GeneratorSpec {
        n: 30,
        m: 10,
        density: 0.2,
        seed,
        scaling: 1.5,
        joint_pattern: true,
    })?;
    let mut rng = rng::stream(seed, rng::VERIFY + 4);
    let l = inst.lipschitz().expect("generator caches the norm");
    let x = SimplexPoint::from_unnormalized((0..inst.m()).map(|_| rng.random_range(0.0..1.0)).collect())?;
    // a log iterate with spectral spread of a few units
    let mut v = DenseSymMatrix::zeros(inst.n());
    v.add_sparse(3.0 / l, &inst.assemble_combination(x.weights())?);
    Ok((inst, v))
}

/// Runs the suites; the statistical one only when `quick` is false.
pub fn run_all(quick: bool, seed: u64, fault: Fault) -> Result<Vec<SuiteReport>> {
    let mut out = vec![
        prox_suite(50, seed, fault)?,
        truncation_suite(100, seed)?,
        oracle_suite(100, seed)?,
        gap_suite(100, seed)?,
    ];
    if !quick {
        out.push(bias_suite(200, seed)?);
    }
    Ok(out)
}
