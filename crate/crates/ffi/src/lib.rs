//! C interface to `driftsample`.
//!
//! Objects are opaque handles created by `ds_*_new`/`ds_*` constructors and
//! released with the matching `ds_*_free`. Every fallible call returns a
//! [`DsStatus`]; on failure [`ds_last_error`] describes the problem for the
//! calling thread. Panics are caught at the boundary and reported as
//! `DS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use driftsample::binary::{run_threshold, BinaryModel, ThresholdPolicy};
use driftsample::model::{kalman_step, trace_cost, trace_value, ModelParams, VarianceTrace};
use driftsample::optimize::{optimal_lazy_discrete, optimal_onoff_for_period, vstar_estimate, OptResult};
use driftsample::policy::{simulate, steady_state, SamplingSchedule};
use driftsample::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    InvalidSchedule = 3,
    NoFixedPoint = 4,
    NotConverged = 5,
    Unsupported = 6,
    Infeasible = 7,
    Internal = 8,
    Config = 9,
    Io = 10,
    Panic = 11,
}

impl From<&Error> for DsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::EmptyTrace => DsStatus::InvalidParameter,
            Error::InvalidSchedule(_) => DsStatus::InvalidSchedule,
            Error::NoFixedPoint(_) => DsStatus::NoFixedPoint,
            Error::NotConverged { .. } => DsStatus::NotConverged,
            Error::Unsupported(_) => DsStatus::Unsupported,
            Error::Infeasible(_) => DsStatus::Infeasible,
            Error::Internal(_) => DsStatus::Internal,
            Error::Config(_) => DsStatus::Config,
            Error::Io(_) => DsStatus::Io,
        }
    }
}

/// Gaussian model parameters.
pub struct DsModel {
    params: ModelParams,
}

/// Per-round variance trace.
pub struct DsTrace {
    trace: VarianceTrace,
}

/// Optimizer output.
pub struct DsOptResult {
    result: OptResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(DsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(DsStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DsStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DsStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            DsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    unsafe { out.write(value) };
    Ok(())
}

unsafe fn slice<'a>(data: *const f64, len: usize) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null("samples"));
    }
    Ok(unsafe { std::slice::from_raw_parts(data, len) })
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn ds_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ds_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a model. `v0 < 0` selects the default prior `rho`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ds_model_new(
    rho: f64,
    sigma: f64,
    c: f64,
    budget: f64,
    z: f64,
    v0: f64,
    fractional_samples: bool,
    out: *mut *mut DsModel,
) -> DsStatus {
    guard(|| {
        let mut p = ModelParams::new(rho, sigma, c, budget)?.with_fixed_cost(z)?.with_fractional(fractional_samples);
        if v0 >= 0.0 {
            p = p.with_v0(v0)?;
        }
        unsafe { write_out(out, boxed(DsModel { params: p }), "out") }
    })
}

/// # Safety
/// `model` must be null or a handle from [`ds_model_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_model_free(model: *mut DsModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// One round of the variance recursion from `v` with `s` samples.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_kalman_step(model: *const DsModel, v: f64, s: f64, out: *mut f64) -> DsStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let next = kalman_step(v, s, &m.params)?;
        unsafe { write_out(out, next, "out") }
    })
}

/// Simulates `len` rounds of explicit sample counts from the model's `v0`.
///
/// # Safety
/// `model` must be a live handle, `samples` must point to `len` doubles
/// (may be null when `len == 0`), and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_simulate(
    model: *const DsModel,
    samples: *const f64,
    len: usize,
    out: *mut *mut DsTrace,
) -> DsStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let s = SamplingSchedule::new(unsafe { slice(samples, len) }?.to_vec())?;
        let trace = simulate(&s, &m.params, m.params.v0)?;
        unsafe { write_out(out, boxed(DsTrace { trace }), "out") }
    })
}

/// One period of the steady state of the periodic schedule `period[0..len]`.
///
/// # Safety
/// As for [`ds_simulate`].
#[no_mangle]
pub unsafe extern "C" fn ds_steady_state(
    model: *const DsModel,
    period: *const f64,
    len: usize,
    out: *mut *mut DsTrace,
) -> DsStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let s = SamplingSchedule::periodic(unsafe { slice(period, len) }?.to_vec())?;
        let trace = steady_state(&s, &m.params, Default::default())?;
        unsafe { write_out(out, boxed(DsTrace { trace }), "out") }
    })
}

/// Number of rounds in the trace; zero for a null handle.
///
/// # Safety
/// `trace` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_trace_len(trace: *const DsTrace) -> usize {
    unsafe { trace.as_ref() }.map_or(0, |t| t.trace.len())
}

/// Average loss `min(v, c)` and average value `max(c − v, 0)` of the trace.
/// Either output pointer may be null.
///
/// # Safety
/// `trace` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_trace_summary(trace: *const DsTrace, cost: *mut f64, value: *mut f64) -> DsStatus {
    guard(|| {
        let t = unsafe { deref(trace, "trace") }?;
        let (c, v) = (trace_cost(&t.trace)?, trace_value(&t.trace)?);
        if !cost.is_null() {
            unsafe { cost.write(c) };
        }
        if !value.is_null() {
            unsafe { value.write(v) };
        }
        Ok(())
    })
}

/// Copies up to `cap` posterior variances into `buf` and returns how many
/// the trace holds (so a call with `cap == 0` queries the size).
///
/// # Safety
/// `trace` must be null or a live handle; `buf` must have room for `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn ds_trace_posteriors(trace: *const DsTrace, buf: *mut f64, cap: usize) -> usize {
    let Some(t) = (unsafe { trace.as_ref() }) else { return 0 };
    if !buf.is_null() {
        for (i, r) in t.trace.records.iter().take(cap).enumerate() {
            unsafe { buf.add(i).write(r.v_post) };
        }
    }
    t.trace.len()
}

/// # Safety
/// `trace` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_trace_free(trace: *mut DsTrace) {
    if !trace.is_null() {
        drop(unsafe { Box::from_raw(trace) });
    }
}

unsafe fn optimize(
    model: *const DsModel,
    out: *mut *mut DsOptResult,
    run: impl FnOnce(&ModelParams) -> driftsample::Result<OptResult>,
) -> DsStatus {
    guard(|| {
        let m = unsafe { deref(model, "model") }?;
        let result = run(&m.params)?;
        unsafe { write_out(out, boxed(DsOptResult { result }), "out") }
    })
}

/// Best on-off policy of the given period.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_optimize_onoff(
    model: *const DsModel,
    period: usize,
    out: *mut *mut DsOptResult,
) -> DsStatus {
    unsafe { optimize(model, out, |p| optimal_onoff_for_period(p, period)) }
}

/// Best on-off value over doubling periods, to within `tol` of the limit.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_vstar(model: *const DsModel, tol: f64, out: *mut *mut DsOptResult) -> DsStatus {
    unsafe { optimize(model, out, |p| vstar_estimate(p, tol)) }
}

/// Best lazy policy.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_optimize_lazy(model: *const DsModel, out: *mut *mut DsOptResult) -> DsStatus {
    unsafe { optimize(model, out, optimal_lazy_discrete) }
}

/// Long-run value of the optimizer's policy; NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_result_value(result: *const DsOptResult) -> f64 {
    unsafe { result.as_ref() }.map_or(f64::NAN, |r| r.result.value)
}

/// Long-run average loss `c − value`; NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ds_result_cost(result: *const DsOptResult) -> f64 {
    unsafe { result.as_ref() }.map_or(f64::NAN, |r| r.result.cost)
}

/// Full result as JSON. Release the string with [`ds_string_free`].
///
/// # Safety
/// `result` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ds_result_json(result: *const DsOptResult, out: *mut *mut c_char) -> DsStatus {
    guard(|| {
        let r = unsafe { deref(result, "result") }?;
        let text = serde_json::to_string(&r.result).map_err(|e| Fail(DsStatus::Internal, e.to_string()))?;
        let c = CString::new(text).map_err(|e| Fail(DsStatus::Internal, e.to_string()))?;
        unsafe { write_out(out, c.into_raw(), "out") }
    })
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_result_free(result: *mut DsOptResult) {
    if !result.is_null() {
        drop(unsafe { Box::from_raw(result) });
    }
}

/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ds_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Summary of a threshold-policy run on the two-state model.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DsBinarySummary {
    pub accuracy: f64,
    pub mean_samples: f64,
    pub median_samples: f64,
    pub cap_hits: usize,
}

/// Runs the threshold policy `theta` for `horizon` rounds.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ds_binary_run(
    eps: f64,
    delta_sig: f64,
    theta: f64,
    horizon: usize,
    seed: u64,
    out: *mut DsBinarySummary,
) -> DsStatus {
    guard(|| {
        let model = BinaryModel::new(eps, delta_sig, 0.0)?;
        let tr = run_threshold(&model, &ThresholdPolicy::new(theta)?, horizon, seed)?;
        let s = &tr.summary;
        let summary = DsBinarySummary {
            accuracy: s.accuracy,
            mean_samples: s.mean_samples,
            median_samples: s.median_samples,
            cap_hits: s.cap_hits,
        };
        unsafe { write_out(out, summary, "out") }
    })
}
