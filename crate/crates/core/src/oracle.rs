//! Randomized first-order oracle.
//!
//! For a log-domain dual point `V`, Gaussian probes `xi^s` are mapped to
//! `chi^s = sum_{j<=J} (W)^j xi^s / j!` with `W = (V - c I) / 2`, and
//!
//! ```text
//! g_hat = sum_s [chi^T A_j chi]_j / sum_s chi^T chi + c
//! H_hat = sum_s chi chi^T / sum_s chi^T chi
//! ```
//!
//! The shift `c` cancels in both ratios in exact arithmetic; it keeps the
//! Taylor expansion short and well conditioned.

use std::f64::consts::E;
use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{
    power_method_from, DenseSymMatrix, ProblemInstance, Shifted, SymOperator,
};
use crate::rng;
use crate::stats::loglog_slope;

/// Oracle batches use stream ids below this; the two bits above it tag retries.
const STREAM_LIMIT: u64 = 1 << 60;
/// Probes per parallel work unit. Fixed so results do not depend on the
/// number of threads.
const CHUNK: usize = 32;
/// Denominators at or below this are treated as an oracle failure.
pub const DENOM_FLOOR: f64 = 1e-300;
/// Fresh-substream retries after a failed call.
pub const MAX_RETRIES: u32 = 3;

/// `N` Gaussian probes, generated lazily from `(seed, stream, index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeBatch {
    samples: usize,
    seed: u64,
    stream: u64,
}

impl ProbeBatch {
    pub fn new(samples: usize, seed: u64, stream: u64) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidArgument("probe batch must be nonempty".into()));
        }
        if stream >= STREAM_LIMIT {
            return Err(Error::InvalidArgument(format!("stream id {stream} out of range")));
        }
        Ok(ProbeBatch {
            samples,
            seed,
            stream,
        })
    }

    /// Batch for oracle call `call` (0 or 1) of iteration `t`.
    pub fn for_call(samples: usize, seed: u64, t: u64, call: u64) -> Result<Self> {
        let stream = t
            .checked_mul(2)
            .and_then(|s| s.checked_add(call))
            .ok_or_else(|| Error::InvalidArgument("iteration counter overflow".into()))?;
        Self::new(samples, seed, stream)
    }

    /// Same batch on a disjoint substream, for `attempt` in `1..=MAX_RETRIES`.
    pub fn retry(&self, attempt: u32) -> Self {
        debug_assert!(attempt <= MAX_RETRIES);
        ProbeBatch {
            stream: self.stream | (u64::from(attempt) << 60),
            ..*self
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn probe(&self, s: usize, n: usize) -> Vec<f64> {
        rng::gaussian_vector(&mut rng::probe_stream(self.seed, self.stream, s as u64), n)
    }

    fn block(&self, range: Range<usize>, n: usize) -> DMatrix<f64> {
        let cols = range.len();
        let data: Vec<f64> = range.flat_map(|s| self.probe(s, n)).collect();
        DMatrix::from_vec(n, cols, data)
    }
}

/// Rule for choosing the Taylor truncation level from `||W||`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationRule {
    /// `floor(max(ln(1/rho), e ||W||))`.
    #[default]
    Experimental,
    /// `ceil(max(ln(1/rho), e^2 ||W||))`, for which the remainder is at most `e^-J`.
    Strict,
}

impl TruncationRule {
    pub fn level(self, norm_w: f64, rho: f64) -> Result<usize> {
        match self {
            TruncationRule::Experimental => truncation_level(norm_w, rho),
            TruncationRule::Strict => truncation_level_strict(norm_w, rho),
        }
    }
}

fn check_truncation_args(norm_w: f64, rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidArgument(format!("rho must lie in (0, 1), got {rho}")));
    }
    if !(norm_w >= 0.0) || !norm_w.is_finite() {
        return Err(Error::InvalidArgument(format!("invalid norm {norm_w}")));
    }
    Ok(())
}

pub fn truncation_level(norm_w: f64, rho: f64) -> Result<usize> {
    check_truncation_args(norm_w, rho)?;
    let j = (1.0 / rho).ln().max(E * norm_w).floor();
    Ok((j as usize).max(1))
}

pub fn truncation_level_strict(norm_w: f64, rho: f64) -> Result<usize> {
    check_truncation_args(norm_w, rho)?;
    let j = (1.0 / rho).ln().max(E * E * norm_w).ceil();
    Ok((j as usize).max(1))
}

/// `sum_{j<=J} (V/2)^j xi / j!` by the recursion
/// `u_0 = xi`, `u_{j+1} = V u_j / (2 (j + 1))`.
pub fn taylor_exp_half_apply<O: SymOperator + ?Sized>(v: &O, xi: &[f64], j: usize) -> Vec<f64> {
    let n = v.dim();
    let mut term = xi.to_vec();
    let mut next = vec![0.0; n];
    let mut sum = term.clone();
    for k in 0..j {
        v.apply_into(&term, &mut next);
        let f = 1.0 / (2.0 * (k + 1) as f64);
        for (s, x) in sum.iter_mut().zip(next.iter_mut()) {
            *x *= f;
            *s += *x;
        }
        std::mem::swap(&mut term, &mut next);
    }
    sum
}

fn taylor_block(w: &DMatrix<f64>, mut term: DMatrix<f64>, j: usize) -> DMatrix<f64> {
    let mut sum = term.clone();
    let mut next = DMatrix::zeros(term.nrows(), term.ncols());
    for k in 0..j {
        next.gemm(1.0 / (k + 1) as f64, w, &term, 0.0);
        sum += &next;
        std::mem::swap(&mut term, &mut next);
    }
    sum
}

/// Columns `chi^s` for every probe of `batch`, with `W = (V - shift I) / 2`.
fn sketch(v: &DenseSymMatrix, shift: f64, batch: &ProbeBatch, j: usize) -> DMatrix<f64> {
    let n = v.n();
    let mut w = v.as_matrix().clone();
    for i in 0..n {
        w[(i, i)] -= shift;
    }
    w *= 0.5;
    let total = batch.samples;
    let chunks: Vec<Range<usize>> = (0..total)
        .step_by(CHUNK)
        .map(|s| s..(s + CHUNK).min(total))
        .collect();
    let run = |r: &Range<usize>| taylor_block(&w, batch.block(r.clone(), n), j);
    if chunks.len() == 1 {
        return run(&chunks[0]);
    }
    let blocks: Vec<DMatrix<f64>> = chunks.par_iter().map(run).collect();
    let mut out = DMatrix::zeros(n, total);
    for (r, b) in chunks.iter().zip(&blocks) {
        out.columns_mut(r.start, r.len()).copy_from(b);
    }
    out
}

/// One oracle answer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleOutput {
    pub g_hat: Vec<f64>,
    /// Present only when requested.
    pub h_hat: Option<DenseSymMatrix>,
    /// `sum_s chi^T chi` (for the shifted exponential).
    pub denom: f64,
    pub j_used: usize,
    /// Shift subtracted from `V` before expanding.
    pub shift: f64,
    pub flops_estimate: u64,
    /// Calls made, including retries.
    pub attempts: u32,
    /// Spectrum estimate of `V` used for centering, when the caller made one.
    pub spectrum: Option<SpectrumEstimate>,
}

/// Oracle at `V` with no shift.
pub fn sample_oracle(
    v: &DenseSymMatrix,
    inst: &ProblemInstance,
    batch: &ProbeBatch,
    j: usize,
    want_density: bool,
) -> Result<OracleOutput> {
    sample_oracle_shifted(v, 0.0, inst, batch, j, want_density)
}

/// Oracle at `V`, expanding `exp((V - shift I) / 2)`.
pub fn sample_oracle_shifted(
    v: &DenseSymMatrix,
    shift: f64,
    inst: &ProblemInstance,
    batch: &ProbeBatch,
    j: usize,
    want_density: bool,
) -> Result<OracleOutput> {
    check_dim(inst.n(), v.n())?;
    if j == 0 {
        return Err(Error::InvalidArgument("truncation level must be at least 1".into()));
    }
    if !shift.is_finite() || !v.is_finite() {
        return Err(Error::NonFinite("oracle input"));
    }
    let n = v.n();
    let chi = sketch(v, shift, batch, j);
    let denom = chi.norm_squared();
    if !(denom > DENOM_FLOOR) || !denom.is_finite() {
        return Err(Error::OracleFailure { denom, attempts: 1 });
    }
    let pattern = inst.pattern();
    let samples = batch.samples as u64;
    let (n64, nnz, m) = (n as u64, pattern.len() as u64, inst.m() as u64);
    let mut flops = 2 * j as u64 * samples * n64 * n64 + 2 * m * nnz;
    let (mut g, h) = if want_density {
        let mut gram = &chi * chi.transpose();
        gram /= denom;
        let h = DenseSymMatrix::symmetrized(gram);
        flops += 2 * samples * n64 * n64;
        (inst.adjoint_sampled(&pattern.sample_dense(&h)), Some(h))
    } else {
        let mut acc = vec![0.0; pattern.len()];
        for col in chi.as_slice().chunks_exact(n.max(1)) {
            pattern.accumulate_outer(col, 1.0, &mut acc);
        }
        acc.iter_mut().for_each(|a| *a /= denom);
        flops += 3 * samples * nnz;
        (inst.adjoint_sampled(&acc), None)
    };
    inst.add_c(&mut g);
    Ok(OracleOutput {
        g_hat: g,
        h_hat: h,
        denom,
        j_used: j,
        shift,
        flops_estimate: flops,
        attempts: 1,
        spectrum: None,
    })
}

/// [`sample_oracle_shifted`] with up to [`MAX_RETRIES`] regenerations on
/// fresh substreams when the denominator underflows.
pub fn sample_with_retries(
    v: &DenseSymMatrix,
    shift: f64,
    inst: &ProblemInstance,
    batch: &ProbeBatch,
    j: usize,
    want_density: bool,
) -> Result<OracleOutput> {
    let mut last = 0.0;
    for attempt in 0..=MAX_RETRIES {
        let b = if attempt == 0 { *batch } else { batch.retry(attempt) };
        match sample_oracle_shifted(v, shift, inst, &b, j, want_density) {
            Ok(mut out) => {
                out.attempts = attempt + 1;
                return Ok(out);
            }
            Err(Error::OracleFailure { denom, .. }) => {
                log::warn!("oracle denominator {denom:e} on stream {}, regenerating", b.stream());
                last = denom;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::OracleFailure {
        denom: last,
        attempts: MAX_RETRIES + 1,
    })
}

/// Extreme-eigenvalue estimates of a dual log-iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEstimate {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub iterations: usize,
}

impl SpectrumEstimate {
    /// Midpoint of the estimated spectrum.
    pub fn center(&self) -> f64 {
        0.5 * (self.lambda_max + self.lambda_min)
    }

    /// Estimated `||(V - center I) / 2||`.
    pub fn half_norm(&self) -> f64 {
        0.25 * (self.lambda_max - self.lambda_min)
    }
}

/// Warm-started power iterations tracking the extreme eigenvalues of a
/// slowly changing matrix.
#[derive(Debug, Clone)]
pub struct SpectrumTracker {
    norm: Vec<f64>,
    top: Vec<f64>,
    bottom: Vec<f64>,
    tol: f64,
    max_iter: usize,
}

impl SpectrumTracker {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, rng::POWER_START);
        SpectrumTracker {
            norm: rng::gaussian_vector(&mut r, n),
            top: rng::gaussian_vector(&mut r, n),
            bottom: rng::gaussian_vector(&mut r, n),
            tol: 1e-4,
            max_iter: 200,
        }
    }

    pub fn with_tolerance(mut self, tol: f64, max_iter: usize) -> Self {
        self.tol = tol;
        self.max_iter = max_iter;
        self
    }

    pub fn estimate(&mut self, v: &DenseSymMatrix) -> SpectrumEstimate {
        let mag = power_method_from(v, &self.norm, self.tol, self.max_iter);
        self.norm.clone_from(&mag.vector);
        if mag.magnitude == 0.0 {
            return SpectrumEstimate {
                lambda_max: 0.0,
                lambda_min: 0.0,
                iterations: mag.iterations,
            };
        }
        // ||A v|| can only underestimate the norm; the margin keeps the
        // shifted operators positive semidefinite
        let s = 1.1 * mag.magnitude;
        let up = power_method_from(
            &Shifted {
                op: v,
                scale: 1.0,
                shift: s,
            },
            &self.top,
            self.tol,
            self.max_iter,
        );
        let down = power_method_from(
            &Shifted {
                op: v,
                scale: -1.0,
                shift: s,
            },
            &self.bottom,
            self.tol,
            self.max_iter,
        );
        self.top = up.vector;
        self.bottom = down.vector;
        let mut hi = up.value - s;
        let mut lo = s - down.value;
        if lo > hi {
            let mid = 0.5 * (lo + hi);
            hi = mid;
            lo = mid;
        }
        SpectrumEstimate {
            lambda_max: hi,
            lambda_min: lo,
            iterations: mag.iterations + up.iterations + down.iterations,
        }
    }
}

/// Parameters of the randomized oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub samples: usize,
    pub rho: f64,
    pub rule: TruncationRule,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            samples: 1,
            rho: 1e-3,
            rule: TruncationRule::Experimental,
        }
    }
}

/// Stateful oracle used by the stochastic solver: centers `V` at the
/// midpoint of its estimated spectrum, picks `J` from the centered norm and
/// draws one probe batch per call.
#[derive(Debug, Clone)]
pub struct SketchOracle {
    cfg: OracleConfig,
    seed: u64,
    tracker: SpectrumTracker,
}

impl SketchOracle {
    pub fn new(n: usize, cfg: OracleConfig, seed: u64) -> Result<Self> {
        if cfg.samples == 0 {
            return Err(Error::InvalidArgument("sample size must be at least 1".into()));
        }
        check_truncation_args(0.0, cfg.rho)?;
        Ok(SketchOracle {
            cfg,
            seed,
            tracker: SpectrumTracker::new(n, seed),
        })
    }

    pub fn config(&self) -> &OracleConfig {
        &self.cfg
    }

    /// Call `call` of iteration `t`.
    pub fn query(
        &mut self,
        v: &DenseSymMatrix,
        inst: &ProblemInstance,
        t: u64,
        call: u64,
        want_density: bool,
    ) -> Result<OracleOutput> {
        let batch = ProbeBatch::for_call(self.cfg.samples, self.seed, t, call)?;
        self.query_batch(v, inst, &batch, want_density)
    }

    pub fn query_batch(
        &mut self,
        v: &DenseSymMatrix,
        inst: &ProblemInstance,
        batch: &ProbeBatch,
        want_density: bool,
    ) -> Result<OracleOutput> {
        let spec = self.tracker.estimate(v);
        let j = self.cfg.rule.level(spec.half_norm(), self.cfg.rho)?;
        let n = v.n() as u64;
        let mut out = sample_with_retries(v, spec.center(), inst, batch, j, want_density)?;
        out.flops_estimate += 2 * spec.iterations as u64 * n * n;
        out.spectrum = Some(spec);
        Ok(out)
    }
}

/// One row of [`bias_deviation_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub samples: usize,
    /// `||mean_r g_r - (A^*(H(V)) + c)||_inf`.
    pub bias: f64,
    /// `||mean_r g_r - (sum_r a_r / sum_r b_r + c)||_inf`: the same bias
    /// measured against the pooled ratio of the same draws.
    pub paired_bias: f64,
    /// `mean_r ||g_r - mean||_inf`.
    pub deviation: f64,
    /// 90% quantile of `||g_r - mean||_inf`.
    pub deviation_q90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTable {
    pub rows: Vec<BiasRow>,
    pub truncation: usize,
    pub bias_slope: Option<f64>,
    pub paired_bias_slope: Option<f64>,
    pub deviation_slope: Option<f64>,
}

/// Empirical bias and deviation of the oracle over a grid of sample sizes,
/// with `J` large enough that the truncation error is at rounding level.
///
/// `bias` compares against the exact gradient and carries Monte-Carlo noise
/// of order `1/sqrt(N * reps)`. `paired_bias` compares the mean of the
/// per-batch ratios with the ratio of the pooled sums of the same draws; the
/// noise largely cancels and the `1/N` ratio bias remains.
pub fn bias_deviation_probe(
    v: &DenseSymMatrix,
    inst: &ProblemInstance,
    n_grid: &[usize],
    reps: usize,
    seed: u64,
) -> Result<BiasTable> {
    check_dim(inst.n(), v.n())?;
    if reps < 2 || n_grid.is_empty() || n_grid.contains(&0) {
        return Err(Error::InvalidArgument("need reps >= 2 and positive sample sizes".into()));
    }
    let eig = v.eigen()?;
    let shift = 0.5 * (eig.max() + eig.min());
    let j = truncation_level_strict(0.25 * (eig.max() - eig.min()), 1e-18)?;
    let exact = inst.primal_gradient(&crate::linalg::exact_density(v)?)?;
    let pattern = inst.pattern();
    let m = inst.m();
    let mut rows = Vec::with_capacity(n_grid.len());
    for (gi, &samples) in n_grid.iter().enumerate() {
        let mut g_reps = Vec::with_capacity(reps);
        let mut a_sum = vec![0.0; m];
        let mut b_sum = 0.0;
        for r in 0..reps {
            let batch = ProbeBatch::new(samples, seed, (gi * reps + r) as u64)?;
            let chi = sketch(v, shift, &batch, j);
            let b = chi.norm_squared();
            let mut acc = vec![0.0; pattern.len()];
            for col in chi.as_slice().chunks_exact(v.n().max(1)) {
                pattern.accumulate_outer(col, 1.0, &mut acc);
            }
            let a = inst.adjoint_sampled(&acc);
            let mut g: Vec<f64> = a.iter().map(|x| x / b).collect();
            inst.add_c(&mut g);
            a_sum.iter_mut().zip(&a).for_each(|(s, x)| *s += x);
            b_sum += b;
            g_reps.push(g);
        }
        let mean: Vec<f64> = (0..m)
            .map(|k| g_reps.iter().map(|g| g[k]).sum::<f64>() / reps as f64)
            .collect();
        let mut pooled: Vec<f64> = a_sum.iter().map(|a| a / b_sum).collect();
        inst.add_c(&mut pooled);
        let sup = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let mut devs: Vec<f64> = g_reps.iter().map(|g| sup(g, &mean)).collect();
        devs.sort_by(f64::total_cmp);
        let q90 = devs[((0.9 * reps as f64).ceil() as usize).clamp(1, reps) - 1];
        rows.push(BiasRow {
            samples,
            bias: sup(&mean, &exact),
            paired_bias: sup(&mean, &pooled),
            deviation: devs.iter().sum::<f64>() / reps as f64,
            deviation_q90: q90,
        });
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.samples as f64).collect();
    let col = |f: fn(&BiasRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    Ok(BiasTable {
        bias_slope: loglog_slope(&ns, &col(|r| r.bias)),
        paired_bias_slope: loglog_slope(&ns, &col(|r| r.paired_bias)),
        deviation_slope: loglog_slope(&ns, &col(|r| r.deviation)),
        truncation: j,
        rows,
    })
}
