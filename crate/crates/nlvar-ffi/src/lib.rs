//! C ABI for the nlvar toolkit.
//!
//! Conventions (mirrored in `include/nlvar.h`):
//!
//! * Opaque handles: `NlvarModel` (a parsed, validated model) and
//!   `NlvarAnalysis` (a model plus its verified class report). Handles are
//!   created by `*_new`/`*_parse` functions and released with the matching
//!   `*_free`; they are immutable and safe to share across threads.
//! * Every fallible function returns an `NlvarStatus`; on failure a
//!   thread-local message is available via [`nlvar_last_error_message`]
//!   until the next failing call on the same thread.
//! * Vectors and matrices cross the boundary as flat row-major `double`
//!   buffers with caller-owned storage; state windows are in companion
//!   order (newest observation first).
//! * Strings returned by the library are NUL-terminated UTF-8 and must be
//!   released with [`nlvar_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::{DMatrix, DVector};
use nlvar::dynamics::{f0_inverse, simulate, ShockPlan};
use nlvar::error::Error;
use nlvar::gjrt::{chi, chi_inverse};
use nlvar::jsr::jsr_bounds;
use nlvar::longrun::{longrun_multipliers, z_infinity};
use nlvar::membership::{check_membership, MembershipReport};
use nlvar::model::ModelSpec;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlvarStatus {
    Ok = 0,
    /// Null pointer, wrong dimension, malformed UTF-8, ...
    InvalidArgument = 1,
    /// Model-level failure (non-member, off-attractor point, ...).
    DomainError = 2,
    /// JSON schema violation.
    ParseError = 3,
    /// A panic was caught at the boundary; state is unspecified.
    Panic = 4,
}

pub struct NlvarModel {
    model: ModelSpec,
}

pub struct NlvarAnalysis {
    model: ModelSpec,
    report: MembershipReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: &str) {
    let cstring = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(cstring));
}

fn status_of(err: &Error) -> NlvarStatus {
    match err {
        Error::Schema { .. } | Error::InvalidModel(_) => NlvarStatus::ParseError,
        Error::DimensionMismatch(_) => NlvarStatus::InvalidArgument,
        _ => NlvarStatus::DomainError,
    }
}

fn fail(err: &Error) -> NlvarStatus {
    set_error(&err.to_string());
    status_of(err)
}

fn invalid(message: &str) -> NlvarStatus {
    set_error(message);
    NlvarStatus::InvalidArgument
}

/// Runs a closure, converting panics into `NlvarStatus::Panic`.
fn guarded(f: impl FnOnce() -> NlvarStatus) -> NlvarStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            NlvarStatus::Panic
        }
    }
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if ptr.is_null() {
        None
    } else {
        Some(unsafe { std::slice::from_raw_parts(ptr, len) })
    }
}

unsafe fn write_vec(out: *mut f64, v: &DVector<f64>) {
    unsafe { std::slice::from_raw_parts_mut(out, v.len()) }.copy_from_slice(v.as_slice());
}

unsafe fn write_mat_row_major(out: *mut f64, m: &DMatrix<f64>) {
    let buf = unsafe { std::slice::from_raw_parts_mut(out, m.nrows() * m.ncols()) };
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf[i * m.ncols() + j] = m[(i, j)];
        }
    }
}

/// Message of the last failure on this thread, or NULL. Owned by the
/// library; valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nlvar_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |s| s.as_ptr())
    })
}

/// Library version as a static string (do not free).
#[no_mangle]
pub extern "C" fn nlvar_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Releases a string returned by the library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn nlvar_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Parses and validates a model from its JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string, `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nlvar_model_parse_json(
    json: *const c_char,
    out: *mut *mut NlvarModel,
) -> NlvarStatus {
    guarded(|| {
        if json.is_null() || out.is_null() {
            return invalid("null pointer");
        }
        let Ok(text) = unsafe { CStr::from_ptr(json) }.to_str() else {
            return invalid("model JSON is not valid UTF-8");
        };
        match ModelSpec::from_json_str(text) {
            Ok(model) => {
                unsafe { *out = Box::into_raw(Box::new(NlvarModel { model })) };
                NlvarStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Releases a model handle.
///
/// # Safety
/// `model` must come from [`nlvar_model_parse_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn nlvar_model_free(model: *mut NlvarModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Reads the series dimension and lag order.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nlvar_model_dims(
    model: *const NlvarModel,
    p: *mut usize,
    k: *mut usize,
) -> NlvarStatus {
    guarded(|| {
        if model.is_null() || p.is_null() || k.is_null() {
            return invalid("null pointer");
        }
        let m = unsafe { &(*model).model };
        unsafe {
            *p = m.p;
            *k = m.k;
        }
        NlvarStatus::Ok
    })
}

/// Serializes the model back to JSON (release with
/// [`nlvar_string_free`]).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nlvar_model_to_json(
    model: *const NlvarModel,
    out: *mut *mut c_char,
) -> NlvarStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            return invalid("null pointer");
        }
        let json = unsafe { &(*model).model }.to_json_string();
        match CString::new(json) {
            Ok(s) => {
                unsafe { *out = s.into_raw() };
                NlvarStatus::Ok
            }
            Err(_) => invalid("interior NUL in JSON"),
        }
    })
}

/// Evaluates the lag map `f_i` at `z` (`len == p`), writing `p` values.
///
/// # Safety
/// Buffers must hold at least `len` (resp. `p`) doubles.
#[no_mangle]
pub unsafe extern "C" fn nlvar_eval_f(
    model: *const NlvarModel,
    lag: usize,
    z: *const f64,
    len: usize,
    out: *mut f64,
) -> NlvarStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            return invalid("null pointer");
        }
        let m = unsafe { &(*model).model };
        let Some(z) = (unsafe { slice_arg(z, len) }) else {
            return invalid("null point");
        };
        if len != m.p || lag > m.k {
            return invalid("dimension or lag out of range");
        }
        let v = m.eval_f(lag, &DVector::from_column_slice(z));
        unsafe { write_vec(out, &v) };
        NlvarStatus::Ok
    })
}

/// Inverts the contemporaneous map at `y` (`len == p`), writing `p` values.
///
/// # Safety
/// Buffers must hold at least `len` (resp. `p`) doubles.
#[no_mangle]
pub unsafe extern "C" fn nlvar_f0_inverse(
    model: *const NlvarModel,
    y: *const f64,
    len: usize,
    out: *mut f64,
) -> NlvarStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            return invalid("null pointer");
        }
        let m = unsafe { &(*model).model };
        let Some(y) = (unsafe { slice_arg(y, len) }) else {
            return invalid("null point");
        };
        if len != m.p {
            return invalid("dimension mismatch");
        }
        match f0_inverse(m, &DVector::from_column_slice(y)) {
            Ok(z) => {
                unsafe { write_vec(out, &z) };
                NlvarStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Runs the class check and returns the report as JSON (release with
/// [`nlvar_string_free`]). Succeeds whatever the verdict; the verdict is
/// inside the JSON.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nlvar_check_membership_json(
    model: *const NlvarModel,
    rho_bar: f64,
    depth: usize,
    out: *mut *mut c_char,
) -> NlvarStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            return invalid("null pointer");
        }
        let m = unsafe { &(*model).model };
        match check_membership(m, rho_bar, depth) {
            Ok(report) => match CString::new(report.to_json_string()) {
                Ok(s) => {
                    unsafe { *out = s.into_raw() };
                    NlvarStatus::Ok
                }
                Err(_) => invalid("interior NUL in JSON"),
            },
            Err(e) => fail(&e),
        }
    })
}

/// Verifies membership and captures the report for the long-run
/// operations; fails with `DomainError` unless the model is a member with
/// common-trend structure (`r < p`).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nlvar_analysis_new(
    model: *const NlvarModel,
    rho_bar: f64,
    depth: usize,
    out: *mut *mut NlvarAnalysis,
) -> NlvarStatus {
    guarded(|| {
        if model.is_null() || out.is_null() {
            return invalid("null pointer");
        }
        let m = unsafe { &(*model).model };
        let report = match check_membership(m, rho_bar, depth) {
            Ok(r) => r,
            Err(e) => return fail(&e),
        };
        if !report.verdict.is_member() || report.r == m.p {
            let e = Error::NotMember(format!("{:?}", report.verdict));
            return fail(&e);
        }
        unsafe {
            *out = Box::into_raw(Box::new(NlvarAnalysis {
                model: m.clone(),
                report,
            }));
        }
        NlvarStatus::Ok
    })
}

/// Releases an analysis handle.
///
/// # Safety
/// `analysis` must come from [`nlvar_analysis_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn nlvar_analysis_free(analysis: *mut NlvarAnalysis) {
    if !analysis.is_null() {
        drop(unsafe { Box::from_raw(analysis) });
    }
}

/// Reads the equilibrium rank `r` and trend dimension `q = p - r`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nlvar_analysis_rank(
    analysis: *const NlvarAnalysis,
    r: *mut usize,
    q: *mut usize,
) -> NlvarStatus {
    guarded(|| {
        if analysis.is_null() || r.is_null() || q.is_null() {
            return invalid("null pointer");
        }
        let a = unsafe { &*analysis };
        unsafe {
            *r = a.report.r;
            *q = a.report.q;
        }
        NlvarStatus::Ok
    })
}

/// Evaluates the coordinate map at `z`, writing `p` values: `q` trend
/// coordinates followed by `r` equilibrium errors.
///
/// # Safety
/// Buffers must hold at least `p` doubles.
#[no_mangle]
pub unsafe extern "C" fn nlvar_chi(
    analysis: *const NlvarAnalysis,
    z: *const f64,
    len: usize,
    out: *mut f64,
) -> NlvarStatus {
    guarded(|| {
        if analysis.is_null() || out.is_null() {
            return invalid("null pointer");
        }
        let a = unsafe { &*analysis };
        let Some(z) = (unsafe { slice_arg(z, len) }) else {
            return invalid("null point");
        };
        if len != a.model.p {
            return invalid("dimension mismatch");
        }
        match chi(&a.model, &a.report, &DVector::from_column_slice(z)) {
            Ok(v) => {
                unsafe { write_vec(out, &v.stacked()) };
                NlvarStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Inverts the coordinate map at `y = (psi, theta)`, writing `p` values.
///
/// # Safety
/// Buffers must hold at least `p` doubles.
#[no_mangle]
pub unsafe extern "C" fn nlvar_chi_inverse(
    analysis: *const NlvarAnalysis,
    y: *const f64,
    len: usize,
    out: *mut f64,
) -> NlvarStatus {
    guarded(|| {
        if analysis.is_null() || out.is_null() {
            return invalid("null pointer");
        }
        let a = unsafe { &*analysis };
        let Some(y) = (unsafe { slice_arg(y, len) }) else {
            return invalid("null point");
        };
        if len != a.model.p {
            return invalid("dimension mismatch");
        }
        match chi_inverse(&a.model, &a.report, &DVector::from_column_slice(y)) {
            Ok(z) => {
                unsafe { write_vec(out, &z) };
                NlvarStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Deterministic limit after one final shock `u` from the state `window`
/// (`k * p` doubles, newest observation first); writes `p` values.
///
/// # Safety
/// Buffers must hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn nlvar_z_infinity(
    analysis: *const NlvarAnalysis,
    u: *const f64,
    window: *const f64,
    out: *mut f64,
) -> NlvarStatus {
    guarded(|| {
        if analysis.is_null() || out.is_null() {
            return invalid("null pointer");
        }
        let a = unsafe { &*analysis };
        let (p, k) = (a.model.p, a.model.k);
        let Some(u) = (unsafe { slice_arg(u, p) }) else {
            return invalid("null shock");
        };
        let Some(w) = (unsafe { slice_arg(window, k * p) }) else {
            return invalid("null window");
        };
        let window: Vec<DVector<f64>> = (0..k)
            .map(|i| DVector::from_column_slice(&w[i * p..(i + 1) * p]))
            .collect();
        match z_infinity(&a.model, &a.report, &DVector::from_column_slice(u), &window) {
            Ok(z) => {
                unsafe { write_vec(out, &z) };
                NlvarStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Long-run multiplier at an attractor point `z`. Writes the `p x p`
/// matrix row-major into `out_theta`, the numerical rank into `out_rank`,
/// and 1/0 into `out_differentiable`. On a regime boundary the matrix is
/// filled with NaN, rank 0, differentiable 0 (not an error).
///
/// # Safety
/// `out_theta` must hold `p * p` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nlvar_longrun_multipliers(
    analysis: *const NlvarAnalysis,
    z: *const f64,
    out_theta: *mut f64,
    out_rank: *mut usize,
    out_differentiable: *mut c_int,
) -> NlvarStatus {
    guarded(|| {
        if analysis.is_null() || out_theta.is_null() || out_rank.is_null() || out_differentiable.is_null()
        {
            return invalid("null pointer");
        }
        let a = unsafe { &*analysis };
        let p = a.model.p;
        let Some(z) = (unsafe { slice_arg(z, p) }) else {
            return invalid("null point");
        };
        match longrun_multipliers(&a.model, &a.report, &DVector::from_column_slice(z)) {
            Ok(res) => {
                match &res.theta_inf {
                    Some(th) => unsafe { write_mat_row_major(out_theta, th) },
                    None => unsafe {
                        std::slice::from_raw_parts_mut(out_theta, p * p).fill(f64::NAN)
                    },
                }
                unsafe {
                    *out_rank = res.rank;
                    *out_differentiable = res.differentiable as c_int;
                }
                NlvarStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Simulates `t` steps under i.i.d. N(0, sigma) shocks from `window`
/// (`k * p`, newest first). `sigma` is `p * p` row-major; `out_path` and
/// `out_shocks` receive `t * p` doubles each (step-major).
///
/// # Safety
/// Buffers must hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn nlvar_simulate_gaussian(
    model: *const NlvarModel,
    window: *const f64,
    sigma: *const f64,
    t: usize,
    seed: u64,
    out_path: *mut f64,
    out_shocks: *mut f64,
) -> NlvarStatus {
    guarded(|| {
        if model.is_null() || out_path.is_null() || out_shocks.is_null() {
            return invalid("null pointer");
        }
        let m = unsafe { &(*model).model };
        let (p, k) = (m.p, m.k);
        let Some(w) = (unsafe { slice_arg(window, k * p) }) else {
            return invalid("null window");
        };
        let Some(s) = (unsafe { slice_arg(sigma, p * p) }) else {
            return invalid("null covariance");
        };
        let window: Vec<DVector<f64>> = (0..k)
            .map(|i| DVector::from_column_slice(&w[i * p..(i + 1) * p]))
            .collect();
        let sigma = DMatrix::from_row_slice(p, p, s);
        let plan = ShockPlan::Gaussian { sigma, seed, t };
        match simulate(m, &window, &plan, None) {
            Ok(res) => {
                let path_buf = unsafe { std::slice::from_raw_parts_mut(out_path, t * p) };
                let shock_buf = unsafe { std::slice::from_raw_parts_mut(out_shocks, t * p) };
                for (i, (z, u)) in res.path.iter().zip(res.shocks.iter()).enumerate() {
                    path_buf[i * p..(i + 1) * p].copy_from_slice(z.as_slice());
                    shock_buf[i * p..(i + 1) * p].copy_from_slice(u.as_slice());
                }
                NlvarStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Brackets the joint spectral radius of `count` square matrices of order
/// `m`, passed as one flat row-major buffer of `count * m * m` doubles.
///
/// # Safety
/// Buffers must hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn nlvar_jsr_bounds(
    mats: *const f64,
    count: usize,
    m: usize,
    depth: usize,
    out_lower: *mut f64,
    out_upper: *mut f64,
    out_certified: *mut c_int,
) -> NlvarStatus {
    guarded(|| {
        if out_lower.is_null() || out_upper.is_null() || out_certified.is_null() {
            return invalid("null pointer");
        }
        let Some(buf) = (unsafe { slice_arg(mats, count * m * m) }) else {
            return invalid("null matrices");
        };
        let family: Vec<DMatrix<f64>> = (0..count)
            .map(|i| DMatrix::from_row_slice(m, m, &buf[i * m * m..(i + 1) * m * m]))
            .collect();
        match jsr_bounds(&family, depth) {
            Ok(b) => {
                unsafe {
                    *out_lower = b.lower;
                    *out_upper = b.upper;
                    *out_certified = b.certified as c_int;
                }
                NlvarStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}
