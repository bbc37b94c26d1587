//! The `eigprox` command line: generate, solve, bench, verify.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::instances::{self, GeneratorSpec};
use crate::linalg::ProblemInstance;
use crate::solvers::{solve, Method, RunReport, SolverConfig};
use crate::stats::Summary;
use crate::verify::{self, Fault};

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;
pub const EXIT_VERIFY_FAILED: u8 = 4;

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "EIGPROX_THREADS";

#[derive(Debug, Parser)]
#[command(name = "eigprox", version, about = "Minimize the largest eigenvalue of a convex combination of sparse symmetric matrices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a random instance and write it to a file.
    Generate(GenerateArgs),
    /// Run a solver on an instance file and write the report as JSON.
    Solve(SolveArgs),
    /// Run a benchmark plan and write per-run and aggregate CSV files.
    Bench(BenchArgs),
    /// Run the self-check suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub m: usize,
    #[arg(long, default_value_t = 0.1)]
    pub density: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exponent p in A_j = j^p C_j.
    #[arg(long, default_value_t = 1.5)]
    pub scaling: f64,
    /// Draw a separate sparsity pattern for every matrix.
    #[arg(long)]
    pub independent_patterns: bool,
    /// Output path; `.json` selects the text format.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, default_value = "smp")]
    pub method: String,
    #[arg(long, default_value_t = 2e-3)]
    pub eps: f64,
    #[arg(long, default_value_t = 1)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    pub rho: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Failure probability; sets the repeat count to ceil(ln(1/beta)).
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub strict_truncation: bool,
    #[arg(long, default_value_t = 100)]
    pub gap_stride: usize,
    /// Drop the averaged dual matrix from the report.
    #[arg(long)]
    pub no_dual: bool,
    /// Report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Benchmark plan (JSON).
    #[arg(long)]
    pub plan: PathBuf,
    /// Overrides the plan's output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Skip the statistical suite.
    #[arg(long)]
    pub quick: bool,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, hide = true, value_enum)]
    pub inject_fault: Option<InjectedFault>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InjectedFault {
    ProxSignFlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableMode {
    /// One method over several sample sizes.
    #[default]
    SampleSizeSweep,
    /// Several methods at the first sample size.
    MethodComparison,
}

/// Instance given inline as generator parameters or as a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSource {
    Path { path: PathBuf },
    Spec(GeneratorSpec),
}

/// A benchmark grid. For generated instances every seed draws its own
/// instance (its own seed field is ignored) and also seeds the solver; file
/// instances use the seed for the solver only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchPlan {
    pub instances: Vec<InstanceSource>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_samples")]
    pub samples: Vec<usize>,
    #[serde(default = "one")]
    pub repetitions: usize,
    pub output: PathBuf,
    /// Defaults to `<output stem>_aggregate.csv`.
    #[serde(default)]
    pub aggregate_output: Option<PathBuf>,
    #[serde(default)]
    pub table: TableMode,
    /// Solver settings shared by all cells; method, samples and seed are
    /// taken from the grid.
    #[serde(default)]
    pub solver: SolverConfig,
}

fn default_samples() -> Vec<usize> {
    vec![1]
}

fn one() -> usize {
    1
}

impl BenchPlan {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.instances.is_empty() {
            return bad("plan has no instances");
        }
        if self.methods.is_empty() {
            return bad("plan has no methods");
        }
        if self.seeds.is_empty() {
            return bad("plan has no seeds");
        }
        if self.samples.is_empty() || self.samples.contains(&0) {
            return bad("sample sizes must be nonempty and positive");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        for src in &self.instances {
            if let InstanceSource::Spec(s) = src {
                s.validate()?;
            }
        }
        self.solver.validate()
    }

    pub fn aggregate_path(&self) -> PathBuf {
        self.aggregate_output.clone().unwrap_or_else(|| {
            let stem = self.output.file_stem().and_then(|s| s.to_str()).unwrap_or("bench");
            self.output.with_file_name(format!("{stem}_aggregate.csv"))
        })
    }

    /// Cells in plan order: instance, method, sample size, seed, repetition.
    pub fn cells(&self) -> Vec<BenchCell> {
        let mut out = Vec::new();
        for (instance, _) in self.instances.iter().enumerate() {
            for &method in &self.methods {
                let sizes: &[usize] = match (method, self.table) {
                    (Method::Smp, TableMode::SampleSizeSweep) => &self.samples,
                    (Method::Smp, TableMode::MethodComparison) => &self.samples[..1],
                    _ => &[0],
                };
                for &samples in sizes {
                    for &seed in &self.seeds {
                        for rep in 0..self.repetitions {
                            out.push(BenchCell {
                                instance,
                                method,
                                samples,
                                seed,
                                rep,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchCell {
    pub instance: usize,
    pub method: Method,
    /// Probes per oracle call; 0 for the exact methods.
    pub samples: usize,
    pub seed: u64,
    pub rep: usize,
}

/// One line of the per-run CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance: usize,
    pub method: Method,
    pub n: usize,
    pub m: usize,
    pub nnz: usize,
    pub samples: usize,
    pub seed: u64,
    pub rep: usize,
    pub iterations: usize,
    pub wallclock_s: f64,
    pub per_iteration_s: f64,
    pub gap: f64,
    pub converged: bool,
    pub j_mean: Option<f64>,
    pub error: Option<String>,
}

impl BenchRow {
    fn from_report(cell: &BenchCell, nnz: usize, r: &RunReport) -> Self {
        BenchRow {
            instance: cell.instance,
            method: cell.method,
            n: r.n,
            m: r.m,
            nnz,
            samples: cell.samples,
            seed: cell.seed,
            rep: cell.rep,
            iterations: r.iterations,
            wallclock_s: r.wallclock_s,
            per_iteration_s: r.per_iteration_s,
            gap: r.gap,
            converged: r.converged,
            j_mean: r.j_history.map(|j| j.mean),
            error: None,
        }
    }

    fn failed(cell: &BenchCell, dims: Option<(usize, usize, usize)>, err: &Error) -> Self {
        let (n, m, nnz) = dims.unwrap_or((0, 0, 0));
        BenchRow {
            instance: cell.instance,
            method: cell.method,
            n,
            m,
            nnz,
            samples: cell.samples,
            seed: cell.seed,
            rep: cell.rep,
            iterations: 0,
            wallclock_s: 0.0,
            per_iteration_s: 0.0,
            gap: f64::NAN,
            converged: false,
            j_mean: None,
            error: Some(err.to_string()),
        }
    }
}

/// Per-cell statistics over seeds and repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub instance: usize,
    pub method: Method,
    pub n: usize,
    pub m: usize,
    pub samples: usize,
    pub runs: usize,
    pub converged: usize,
    pub iterations_mean: f64,
    pub iterations_std: f64,
    pub iterations_ci_low: f64,
    pub iterations_ci_high: f64,
    pub wallclock_mean: f64,
    pub wallclock_std: f64,
    pub wallclock_ci_low: f64,
    pub wallclock_ci_high: f64,
    pub per_iteration_mean: f64,
}

pub fn aggregate(rows: &[BenchRow]) -> Vec<AggregateRow> {
    let mut groups: BTreeMap<(usize, u8, usize), Vec<&BenchRow>> = BTreeMap::new();
    let order = |m: Method| match m {
        Method::Smp => 0u8,
        Method::Mp => 1,
        Method::Md => 2,
    };
    for r in rows.iter().filter(|r| r.error.is_none()) {
        groups.entry((r.instance, order(r.method), r.samples)).or_default().push(r);
    }
    let nan = Summary {
        count: 0,
        mean: f64::NAN,
        std: f64::NAN,
        ci_low: f64::NAN,
        ci_high: f64::NAN,
    };
    groups
        .into_values()
        .map(|g| {
            let it: Vec<f64> = g.iter().map(|r| r.iterations as f64).collect();
            let wc: Vec<f64> = g.iter().map(|r| r.wallclock_s).collect();
            let pi: Vec<f64> = g.iter().map(|r| r.per_iteration_s).collect();
            let si = Summary::of(&it).unwrap_or(nan);
            let sw = Summary::of(&wc).unwrap_or(nan);
            AggregateRow {
                instance: g[0].instance,
                method: g[0].method,
                n: g[0].n,
                m: g[0].m,
                samples: g[0].samples,
                runs: g.len(),
                converged: g.iter().filter(|r| r.converged).count(),
                iterations_mean: si.mean,
                iterations_std: si.std,
                iterations_ci_low: si.ci_low,
                iterations_ci_high: si.ci_high,
                wallclock_mean: sw.mean,
                wallclock_std: sw.std,
                wallclock_ci_low: sw.ci_low,
                wallclock_ci_high: sw.ci_high,
                per_iteration_mean: pi.iter().sum::<f64>() / pi.len() as f64,
            }
        })
        .collect()
}

fn resolve_instance(src: &InstanceSource, seed: u64) -> Result<ProblemInstance, Error> {
    match src {
        InstanceSource::Path { path } => instances::load(path),
        InstanceSource::Spec(spec) => instances::generate(&GeneratorSpec { seed, ..spec.clone() }),
    }
}

/// Runs every cell in plan order. Failures become rows with
/// `converged = false` and an error message.
pub fn run_plan(plan: &BenchPlan) -> Result<Vec<BenchRow>, Error> {
    plan.validate()?;
    let mut cache: BTreeMap<(usize, u64), ProblemInstance> = BTreeMap::new();
    let mut rows = Vec::new();
    for cell in plan.cells() {
        let key = match &plan.instances[cell.instance] {
            InstanceSource::Path { .. } => (cell.instance, 0),
            InstanceSource::Spec(_) => (cell.instance, cell.seed),
        };
        let inst = match cache.entry(key) {
            Entry::Occupied(o) => o.into_mut(),
            Entry::Vacant(v) => match resolve_instance(&plan.instances[cell.instance], cell.seed) {
                Ok(inst) => v.insert(inst),
                Err(e) => {
                    log::error!("instance {} seed {}: {e}", cell.instance, cell.seed);
                    rows.push(BenchRow::failed(&cell, None, &e));
                    continue;
                }
            },
        };
        let inst = &*inst;
        let cfg = SolverConfig {
            method: cell.method,
            samples: cell.samples.max(1),
            seed: cell.seed,
            ..plan.solver.clone()
        };
        let nnz = inst.pattern().len();
        let row = match solve(inst, &cfg) {
            Ok(r) => BenchRow::from_report(&cell, nnz, &r),
            Err(e) => {
                log::error!("{cell:?}: {e}");
                BenchRow::failed(&cell, Some((inst.n(), inst.m(), nnz)), &e)
            }
        };
        log::info!(
            "{} n={} N={} seed={} rep={}: {} iterations, {:.3} s",
            row.method,
            row.n,
            row.samples,
            row.seed,
            row.rep,
            row.iterations,
            row.wallclock_s
        );
        rows.push(row);
        // keep one instance per seed alive at a time for generated sources
        if cell.rep + 1 == plan.repetitions {
            cache.retain(|k, _| k.1 == cell.seed || matches!(plan.instances[k.0], InstanceSource::Path { .. }));
        }
    }
    Ok(rows)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, Error> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked to be an i/o error"),
        }
    } else {
        Error::InvalidArgument(format!("{}: {e}", path.display()))
    }
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Io { .. } | Error::Format { .. } => EXIT_IO,
        Error::InvalidArgument(_) | Error::Dimension { .. } => EXIT_USAGE,
        Error::NonFinite(_) | Error::OracleFailure { .. } => EXIT_IO,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_for(&err))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.write_all(b"\n"))
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn cmd_generate(a: &GenerateArgs) -> ExitCode {
    let spec = GeneratorSpec {
        n: a.n,
        m: a.m,
        density: a.density,
        joint_pattern: !a.independent_patterns,
        seed: a.seed,
        scaling: a.scaling,
    };
    if let Err(e) = spec.validate() {
        return fail(e);
    }
    let inst = match instances::generate(&spec) {
        Ok(i) => i,
        Err(e) => return fail(e),
    };
    if let Err(e) = instances::save(&inst, &a.out) {
        return fail(e);
    }
    let nnz = inst.pattern().len();
    println!("wrote {}", a.out.display());
    println!("n = {}, m = {}, density = {}, seed = {}, scaling = {}", a.n, a.m, a.density, a.seed, a.scaling);
    println!(
        "pattern nnz (upper triangle) = {nnz} ({:.4} of n(n+1)/2)",
        nnz as f64 / (a.n * (a.n + 1) / 2) as f64
    );
    println!("operator norm L = {:.12e}", inst.lipschitz().unwrap_or(f64::NAN));
    ExitCode::SUCCESS
}

fn cmd_solve(a: &SolveArgs) -> ExitCode {
    let method: Method = match a.method.parse() {
        Ok(m) => m,
        Err(e) => return fail(e),
    };
    let cfg = SolverConfig {
        method,
        eps: a.eps,
        samples: a.samples,
        seed: a.seed,
        rho: a.rho,
        max_iter: a.max_iter,
        repeats: a.repeats,
        beta: a.beta,
        strict_truncation: a.strict_truncation,
        gap_check_stride: a.gap_stride,
        ..SolverConfig::default()
    };
    if let Err(e) = cfg.validate() {
        return fail(e);
    }
    let inst = match instances::load(&a.instance) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_IO);
        }
    };
    let mut report = match solve(&inst, &cfg) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    if a.no_dual {
        report.final_y = crate::linalg::DenseSymMatrix::zeros(0);
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    if let Err(e) = write_output(a.out.as_deref(), &text) {
        return fail(e);
    }
    log::info!(
        "{method}: {} iterations, gap {:.3e}, converged {}",
        report.iterations,
        report.gap,
        report.converged
    );
    if report.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_NOT_CONVERGED)
    }
}

fn cmd_bench(a: &BenchArgs) -> ExitCode {
    let text = match std::fs::read_to_string(&a.plan) {
        Ok(t) => t,
        Err(e) => return fail(Error::io(&a.plan, e)),
    };
    let mut plan: BenchPlan = match serde_json::from_str(&text) {
        Ok(p) => p,
        Err(e) => return fail(Error::InvalidArgument(format!("{}: {e}", a.plan.display()))),
    };
    if let Some(out) = &a.out {
        plan.output = out.clone();
    }
    let rows = match run_plan(&plan) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let agg = aggregate(&rows);
    if let Err(e) = write_csv(&plan.output, &rows).and_then(|_| write_csv(&plan.aggregate_path(), &agg)) {
        return fail(e);
    }
    for g in &agg {
        println!(
            "instance {} {} N={}: {}/{} converged, iterations {:.1} [{:.1}, {:.1}], time {:.3} s",
            g.instance, g.method, g.samples, g.converged, g.runs, g.iterations_mean, g.iterations_ci_low,
            g.iterations_ci_high, g.wallclock_mean
        );
    }
    if plan.table == TableMode::MethodComparison {
        for inst in 0..plan.instances.len() {
            let time = |m: Method| agg.iter().find(|g| g.instance == inst && g.method == m).map(|g| g.wallclock_mean);
            if let (Some(s), Some(p)) = (time(Method::Smp), time(Method::Mp)) {
                println!("instance {inst}: smp/mp time ratio {:.3}", s / p);
            }
        }
    }
    ExitCode::SUCCESS
}

fn cmd_verify(a: &VerifyArgs) -> ExitCode {
    let fault = match a.inject_fault {
        Some(InjectedFault::ProxSignFlip) => Fault::ProxSignFlip,
        None => Fault::None,
    };
    let reports = match verify::run_all(a.quick, a.seed, fault) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    let mut ok = true;
    for r in &reports {
        ok &= r.passed;
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {:<10} {:>5} cases {:>7.2} s  {}", r.name, r.cases, r.elapsed_s, r.detail);
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERIFY_FAILED)
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = v
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = configure_threads() {
        return fail(e);
    }
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Verify(a) => cmd_verify(a),
    }
}
