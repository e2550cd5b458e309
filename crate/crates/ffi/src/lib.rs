//! C ABI over the paramexp library.
//!
//! Every function returns a `PxStatus`; results go through out-pointers.
//! Handles are opaque and must be released with their `_free` function.
//! The message of the last failure on the calling thread is available from
//! `px_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use paramexp::gittins::gittins_index;
use paramexp::harness::{
    preset, run_experiment, summarize, summary_rows, write_outputs, ExperimentConfig,
    ExperimentOutput, SummaryRow,
};
use paramexp::schedule::{Schedule, Theta};
use paramexp::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    Failed = 4,
    Io = 5,
    Panic = 6,
}

/// Parsed experiment config.
pub struct PxExperiment {
    cfg: ExperimentConfig,
}

/// Results of a completed experiment.
pub struct PxResults {
    out: ExperimentOutput,
    rows: Vec<SummaryRow>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> PxStatus {
    match e {
        Error::Config(_) => PxStatus::InvalidConfig,
        Error::Io(_) => PxStatus::Io,
        Error::Precondition(_) | Error::InvalidInput(_) | Error::ArmOutOfRange { .. } => {
            PxStatus::InvalidArgument
        }
        _ => PxStatus::Failed,
    }
}

fn guard<F: FnOnce() -> Result<(), PxStatus>>(f: F) -> PxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PxStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside paramexp");
            PxStatus::Panic
        }
    }
}

fn fail(e: Error) -> PxStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null() -> PxStatus {
    set_error("null pointer argument");
    PxStatus::NullPointer
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, PxStatus> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string is not valid UTF-8");
        PxStatus::InvalidArgument
    })
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), PxStatus> {
    if out.is_null() {
        return Err(null());
    }
    out.write(v);
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn px_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Exploration level of the schedule `(theta0, theta1, theta2)` at step
/// `t` of a horizon-`horizon` problem.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn px_schedule_evaluate(
    theta0: f64,
    theta1: f64,
    theta2: f64,
    horizon: usize,
    t: usize,
    out: *mut f64,
) -> PxStatus {
    guard(|| {
        let s = Schedule::new(Theta::new(theta0, theta1, theta2), horizon).map_err(fail)?;
        let v = s.evaluate(t).map_err(fail)?;
        write_out(out, v)
    })
}

/// Finite-horizon Gittins index of a Beta(a, b) arm with `remaining` steps.
///
/// # Safety
/// `out` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn px_gittins_index(a: u32, b: u32, remaining: usize, out: *mut f64) -> PxStatus {
    guard(|| write_out(out, gittins_index(a, b, remaining).map_err(fail)?))
}

/// Mean and standard error of `n` values.
///
/// # Safety
/// `values` must point to `n` doubles; `mean` and `se` must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_summarize(values: *const f64, n: usize, mean: *mut f64, se: *mut f64) -> PxStatus {
    guard(|| {
        if values.is_null() {
            return Err(null());
        }
        let s = summarize(std::slice::from_raw_parts(values, n)).map_err(fail)?;
        write_out(mean, s.mean)?;
        write_out(se, s.se)
    })
}

unsafe fn new_experiment(cfg: ExperimentConfig, out: *mut *mut PxExperiment) -> Result<(), PxStatus> {
    cfg.validate().map_err(fail)?;
    write_out(out, Box::into_raw(Box::new(PxExperiment { cfg })))
}

/// Parses an experiment from TOML text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_experiment_from_toml(toml: *const c_char, out: *mut *mut PxExperiment) -> PxStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_toml_str(text(toml)?).map_err(fail)?;
        new_experiment(cfg, out)
    })
}

/// Loads a built-in experiment by name.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_experiment_from_preset(name: *const c_char, out: *mut *mut PxExperiment) -> PxStatus {
    guard(|| {
        let cfg = preset(text(name)?).map_err(fail)?;
        new_experiment(cfg, out)
    })
}

/// Overrides the replicate count and base seed.
///
/// # Safety
/// `exp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn px_experiment_set_run(exp: *mut PxExperiment, replicates: usize, seed: u64) -> PxStatus {
    guard(|| {
        let exp = exp.as_mut().ok_or_else(null)?;
        let mut cfg = exp.cfg.clone();
        cfg.replicates = replicates;
        cfg.seed = seed;
        cfg.validate().map_err(fail)?;
        exp.cfg = cfg;
        Ok(())
    })
}

/// Number of variants in the experiment.
///
/// # Safety
/// `exp` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn px_experiment_n_variants(exp: *const PxExperiment, out: *mut usize) -> PxStatus {
    guard(|| write_out(out, exp.as_ref().ok_or_else(null)?.cfg.variants.len()))
}

/// Runs every episode; `workers == 0` uses every core.
///
/// # Safety
/// `exp` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn px_experiment_run(
    exp: *const PxExperiment,
    workers: usize,
    out: *mut *mut PxResults,
) -> PxStatus {
    guard(|| {
        let exp = exp.as_ref().ok_or_else(null)?;
        if out.is_null() {
            return Err(null());
        }
        let res = run_experiment(&exp.cfg, Some(workers)).map_err(fail)?;
        let rows = summary_rows(&res);
        write_out(out, Box::into_raw(Box::new(PxResults { out: res, rows })))
    })
}

/// # Safety
/// `exp` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn px_experiment_free(exp: *mut PxExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Summary of variant `index`: completed replicates, mean and SE. A
/// variant with no completed replicate reports `n = 0` and NaN values.
///
/// # Safety
/// `res` must be a live handle; out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn px_results_summary(
    res: *const PxResults,
    index: usize,
    n: *mut usize,
    mean: *mut f64,
    se: *mut f64,
) -> PxStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(null)?;
        let row = res.rows.get(index).ok_or_else(|| {
            set_error(format!("variant index {index} out of range"));
            PxStatus::InvalidArgument
        })?;
        let (k, m, s) = row.summary.map_or((0, f64::NAN, f64::NAN), |s| (s.n, s.mean, s.se));
        write_out(n, k)?;
        write_out(mean, m)?;
        write_out(se, s)
    })
}

/// Copies the name of variant `index` like `px_last_error_message`.
///
/// # Safety
/// `res` must be a live handle; `buf` null or `len` writable bytes;
/// `full_len` valid.
#[no_mangle]
pub unsafe extern "C" fn px_results_variant_name(
    res: *const PxResults,
    index: usize,
    buf: *mut c_char,
    len: usize,
    full_len: *mut usize,
) -> PxStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(null)?;
        let name = res.rows.get(index).map(|r| r.variant.as_str()).ok_or_else(|| {
            set_error(format!("variant index {index} out of range"));
            PxStatus::InvalidArgument
        })?;
        if !buf.is_null() && len > 0 {
            let k = name.len().min(len - 1);
            ptr::copy_nonoverlapping(name.as_ptr(), buf.cast::<u8>(), k);
            *buf.add(k) = 0;
        }
        write_out(full_len, name.len())
    })
}

/// Number of failed episodes.
///
/// # Safety
/// `res` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn px_results_n_failures(res: *const PxResults, out: *mut usize) -> PxStatus {
    guard(|| write_out(out, res.as_ref().ok_or_else(null)?.out.n_failures()))
}

/// Writes the CSV logs and metadata into directory `dir`.
///
/// # Safety
/// `res` must be a live handle; `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn px_results_write(res: *const PxResults, dir: *const c_char) -> PxStatus {
    guard(|| {
        let res = res.as_ref().ok_or_else(null)?;
        write_outputs(&res.out, Path::new(text(dir)?)).map_err(fail)?;
        Ok(())
    })
}

/// # Safety
/// `res` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn px_results_free(res: *mut PxResults) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}
