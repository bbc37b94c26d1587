//! C ABI over `eigprox`.
//!
//! Instances and reports are opaque heap handles released with their
//! `_free` function. Every fallible call returns an [`EigproxStatus`]; the
//! message of the last failure on the calling thread is available from
//! [`eigprox_last_error`]. Panics are caught at the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use eigprox::instances::{self, GeneratorSpec};
use eigprox::linalg::ProblemInstance;
use eigprox::solvers::{solve, Method, RunReport, SolverConfig};
use eigprox::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigproxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Numeric = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EigproxMethod {
    Smp = 0,
    Mp = 1,
    Md = 2,
}

/// Opaque problem instance.
pub struct EigproxInstance(ProblemInstance);

/// Opaque solver report.
pub struct EigproxReport(RunReport);

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EigproxGeneratorSpec {
    pub n: usize,
    pub m: usize,
    pub density: f64,
    pub joint_pattern: bool,
    pub seed: u64,
    pub scaling: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct EigproxSolverOptions {
    pub method: EigproxMethod,
    pub eps: f64,
    pub samples: usize,
    pub rho: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub repeats: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct EigproxSummary {
    pub n: usize,
    pub m: usize,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub gap: f64,
    pub lipschitz: f64,
    pub wallclock_s: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> EigproxStatus {
    match err {
        Error::InvalidArgument(_) | Error::Dimension { .. } => EigproxStatus::InvalidArgument,
        Error::Io { .. } => EigproxStatus::Io,
        Error::Format { .. } => EigproxStatus::Format,
        Error::NonFinite(_) | Error::OracleFailure { .. } => EigproxStatus::Numeric,
    }
}

/// Runs `f`, recording any error or panic.
fn guard(f: impl FnOnce() -> Result<(), (EigproxStatus, String)>) -> EigproxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EigproxStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            EigproxStatus::Panic
        }
    }
}

fn lib(err: Error) -> (EigproxStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (EigproxStatus, String) {
    (EigproxStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a str, (EigproxStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map_err(|_| (EigproxStatus::InvalidArgument, "path is not UTF-8".into()))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn eigprox_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `out` must be null or point to writable memory for one spec.
#[no_mangle]
pub unsafe extern "C" fn eigprox_generator_spec_default(out: *mut EigproxGeneratorSpec) -> EigproxStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let d = GeneratorSpec::default();
        *out = EigproxGeneratorSpec {
            n: d.n,
            m: d.m,
            density: d.density,
            joint_pattern: d.joint_pattern,
            seed: d.seed,
            scaling: d.scaling,
        };
        Ok(())
    })
}

/// # Safety
/// `out` must be null or point to writable memory for one options struct.
#[no_mangle]
pub unsafe extern "C" fn eigprox_solver_options_default(out: *mut EigproxSolverOptions) -> EigproxStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let d = SolverConfig::default();
        *out = EigproxSolverOptions {
            method: EigproxMethod::Smp,
            eps: d.eps,
            samples: d.samples,
            rho: d.rho,
            max_iter: d.max_iter,
            seed: d.seed,
            repeats: d.repeats,
        };
        Ok(())
    })
}

fn publish<T>(out: *mut *mut T, value: T) {
    // SAFETY: callers checked `out` for null
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

/// # Safety
/// `spec` must point to a valid spec; `out` to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn eigprox_instance_generate(
    spec: *const EigproxGeneratorSpec,
    out: *mut *mut EigproxInstance,
) -> EigproxStatus {
    guard(|| {
        let s = spec.as_ref().ok_or_else(|| null("spec"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inst = instances::generate(&GeneratorSpec {
            n: s.n,
            m: s.m,
            density: s.density,
            joint_pattern: s.joint_pattern,
            seed: s.seed,
            scaling: s.scaling,
        })
        .map_err(lib)?;
        publish(out, EigproxInstance(inst));
        Ok(())
    })
}

/// # Safety
/// `path` must be a nul-terminated string; `out` writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn eigprox_instance_load(
    path: *const c_char,
    out: *mut *mut EigproxInstance,
) -> EigproxStatus {
    guard(|| {
        let p = path_arg(path)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inst = instances::load(p).map_err(lib)?;
        publish(out, EigproxInstance(inst));
        Ok(())
    })
}

/// # Safety
/// `inst` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn eigprox_instance_save(inst: *const EigproxInstance, path: *const c_char) -> EigproxStatus {
    guard(|| {
        let inst = inst.as_ref().ok_or_else(|| null("instance"))?;
        instances::save(&inst.0, path_arg(path)?).map_err(lib)
    })
}

/// Dimensions and stored upper-triangle entries per matrix. Any output
/// pointer may be null.
///
/// # Safety
/// `inst` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn eigprox_instance_dims(
    inst: *const EigproxInstance,
    n: *mut usize,
    m: *mut usize,
    nnz: *mut usize,
) -> EigproxStatus {
    guard(|| {
        let inst = &inst.as_ref().ok_or_else(|| null("instance"))?.0;
        if let Some(n) = n.as_mut() {
            *n = inst.n();
        }
        if let Some(m) = m.as_mut() {
            *m = inst.m();
        }
        if let Some(nnz) = nnz.as_mut() {
            *nnz = inst.pattern().len();
        }
        Ok(())
    })
}

/// `max_j ||A_j||`, computed on first use.
///
/// # Safety
/// `inst` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eigprox_instance_lipschitz(inst: *const EigproxInstance, out: *mut f64) -> EigproxStatus {
    guard(|| {
        let inst = &inst.as_ref().ok_or_else(|| null("instance"))?.0;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = inst.lipschitz_constant(1e-7).map_err(lib)?.value;
        Ok(())
    })
}

/// # Safety
/// `inst` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eigprox_instance_free(inst: *mut EigproxInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Runs a solver. Returns `EIGPROX_STATUS_OK` also when the iteration limit
/// was reached; check `converged` in the summary.
///
/// # Safety
/// `inst` must be a live handle, `opts` valid, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eigprox_solve(
    inst: *const EigproxInstance,
    opts: *const EigproxSolverOptions,
    out: *mut *mut EigproxReport,
) -> EigproxStatus {
    guard(|| {
        let inst = &inst.as_ref().ok_or_else(|| null("instance"))?.0;
        let o = opts.as_ref().ok_or_else(|| null("options"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let method = match o.method {
            EigproxMethod::Smp => Method::Smp,
            EigproxMethod::Mp => Method::Mp,
            EigproxMethod::Md => Method::Md,
        };
        let cfg = SolverConfig {
            method,
            eps: o.eps,
            samples: o.samples,
            rho: o.rho,
            max_iter: o.max_iter,
            seed: o.seed,
            repeats: o.repeats,
            ..SolverConfig::default()
        };
        let report = solve(inst, &cfg).map_err(lib)?;
        publish(out, EigproxReport(report));
        Ok(())
    })
}

/// # Safety
/// `report` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eigprox_report_summary(report: *const EigproxReport, out: *mut EigproxSummary) -> EigproxStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.0;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = EigproxSummary {
            n: r.n,
            m: r.m,
            iterations: r.iterations,
            converged: r.converged,
            objective: r.objective,
            gap: r.gap,
            lipschitz: r.lipschitz,
            wallclock_s: r.wallclock_s,
        };
        Ok(())
    })
}

/// Copies the averaged primal point into `buf` (capacity `len`). The full
/// length is stored in `needed`; a short buffer is an invalid argument.
///
/// # Safety
/// `report` must be a live handle; `buf` writable for `len` doubles (or null
/// with `len == 0`); `needed` null or writable.
#[no_mangle]
pub unsafe extern "C" fn eigprox_report_x(
    report: *const EigproxReport,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> EigproxStatus {
    guard(|| {
        let x = &report.as_ref().ok_or_else(|| null("report"))?.0.final_x;
        if let Some(needed) = needed.as_mut() {
            *needed = x.len();
        }
        if len < x.len() {
            return Err((
                EigproxStatus::InvalidArgument,
                format!("buffer holds {len} values, {} needed", x.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(x.as_ptr(), buf, x.len());
        Ok(())
    })
}

/// Full report as JSON, stored in `out`; release with [`eigprox_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn eigprox_report_to_json(report: *const EigproxReport, out: *mut *mut c_char) -> EigproxStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = serde_json::to_string(r).map_err(|e| (EigproxStatus::Numeric, e.to_string()))?;
        *out = CString::new(text).expect("json has no nul").into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eigprox_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eigprox_report_free(report: *mut EigproxReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        assert_eq!(status_of(&Error::InvalidArgument("x".into())), EigproxStatus::InvalidArgument);
        assert_eq!(status_of(&Error::NonFinite("x")), EigproxStatus::Numeric);
    }

    #[test]
    fn panics_become_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, EigproxStatus::Panic);
        let msg = unsafe { CStr::from_ptr(eigprox_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "panic: boom");
    }
}
