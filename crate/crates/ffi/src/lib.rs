//! C ABI over the audit toolkit.
//!
//! Every function returns an [`FaStatus`]. On failure the message is kept
//! per thread and can be fetched with [`fa_last_error`]. Strings returned
//! through out-pointers are owned by the caller and released with
//! [`fa_string_free`]; bundles are released with [`fa_bundle_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use fairaudit::audit::{render, run_audit, AuditBundle, AuditConfig, Format};
use fairaudit::meta::treatment_labels_bool;
use fairaudit::metrics::fairness_report;
use fairaudit::Error;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Data = 4,
    InvalidArgument = 5,
    AllMethodsFailed = 6,
    Panic = 7,
}

/// Output formats for [`fa_bundle_render`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaFormat {
    Json = 0,
    Markdown = 1,
    Rules = 2,
}

/// Group fairness of one prediction set. Undefined ratios are NaN.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaFairnessReport {
    pub accuracy: f64,
    pub disparate_impact: f64,
    pub average_odds: f64,
    pub equal_opportunity: f64,
    pub statistical_parity: f64,
}

/// Opaque audit result.
pub struct FaBundle {
    inner: AuditBundle,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> FaStatus {
    match e {
        Error::Config(_) => FaStatus::Config,
        Error::AllMethodsFailed(_) => FaStatus::AllMethodsFailed,
        Error::Io { .. }
        | Error::Csv(_)
        | Error::MissingColumn(_)
        | Error::BadValue { .. }
        | Error::NonBinaryLabel { .. }
        | Error::Schema(_) => FaStatus::Data,
        _ => FaStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into a status plus last error.
fn guard<F>(f: F) -> FaStatus
where
    F: FnOnce() -> Result<(), (FaStatus, String)>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FaStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FaStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (FaStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (FaStatus, String) {
    (FaStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn flags(p: *const u8, n: usize, what: &str) -> Result<Vec<bool>, (FaStatus, String)> {
    if p.is_null() {
        return if n == 0 { Ok(Vec::new()) } else { Err(null(what)) };
    }
    Ok(slice::from_raw_parts(p, n).iter().map(|&v| v != 0).collect())
}

fn to_c_string(s: String) -> Result<*mut c_char, (FaStatus, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (FaStatus::InvalidArgument, "output contains a NUL byte".into()))
}

/// Copies the calling thread's last error message into a new string, or
/// returns null when there is none. Free with [`fa_string_free`].
#[no_mangle]
pub extern "C" fn fa_last_error() -> *mut c_char {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        Some(m) => CString::new(m.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn fa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Fairness report of `n` predictions. `y`, `yhat` and `privileged` hold
/// one byte per record (nonzero = favorable / privileged).
///
/// # Safety
/// Each array must hold `n` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fa_fairness_report(
    y: *const u8,
    yhat: *const u8,
    privileged: *const u8,
    n: usize,
    out: *mut FaFairnessReport,
) -> FaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let y = flags(y, n, "y")?;
        let yhat = flags(yhat, n, "yhat")?;
        let mask = flags(privileged, n, "privileged")?;
        let r = fairness_report(&y, &yhat, &mask).map_err(lib_err)?;
        *out = FaFairnessReport {
            accuracy: r.accuracy,
            disparate_impact: r.disparate_impact.unwrap_or(f64::NAN),
            average_odds: r.average_odds.unwrap_or(f64::NAN),
            equal_opportunity: r.equal_opportunity.unwrap_or(f64::NAN),
            statistical_parity: r.statistical_parity,
        };
        Ok(())
    })
}

/// Treatment-change labels (-1, 0, +1) of mitigated labels against the
/// ground truth, written to `out[0..n]`.
///
/// # Safety
/// `y` and `y_mitigated` must hold `n` bytes; `out` must hold `n` slots.
#[no_mangle]
pub unsafe extern "C" fn fa_treatment_labels(
    y: *const u8,
    y_mitigated: *const u8,
    n: usize,
    out: *mut i8,
) -> FaStatus {
    guard(|| {
        if out.is_null() && n > 0 {
            return Err(null("out"));
        }
        let y = flags(y, n, "y")?;
        let y2 = flags(y_mitigated, n, "y_mitigated")?;
        let t = treatment_labels_bool(&y, &y2).map_err(lib_err)?;
        if n > 0 {
            slice::from_raw_parts_mut(out, n).copy_from_slice(&t.0);
        }
        Ok(())
    })
}

/// Runs an audit from a JSON config and stores the bundle in `*out`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fa_audit_run(config_json: *const c_char, out: *mut *mut FaBundle) -> FaStatus {
    guard(|| {
        if config_json.is_null() {
            return Err(null("config_json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|_| (FaStatus::InvalidUtf8, "config is not UTF-8".to_string()))?;
        let cfg = AuditConfig::from_json(text).map_err(lib_err)?;
        let inner = run_audit(&cfg).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(FaBundle { inner }));
        Ok(())
    })
}

/// Renders a bundle; the new string is stored in `*out`.
///
/// # Safety
/// `bundle` must come from [`fa_audit_run`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fa_bundle_render(bundle: *const FaBundle, format: FaFormat, out: *mut *mut c_char) -> FaStatus {
    guard(|| {
        if bundle.is_null() {
            return Err(null("bundle"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let f = match format {
            FaFormat::Json => Format::Json,
            FaFormat::Markdown => Format::Markdown,
            FaFormat::Rules => Format::Rules,
        };
        *out = to_c_string(render(&(*bundle).inner, f))?;
        Ok(())
    })
}

/// Number of methods in the bundle, or 0 for null.
///
/// # Safety
/// `bundle` must be null or come from [`fa_audit_run`].
#[no_mangle]
pub unsafe extern "C" fn fa_bundle_method_count(bundle: *const FaBundle) -> usize {
    bundle.as_ref().map_or(0, |b| b.inner.methods.len())
}

/// Releases a bundle. Null is ignored.
///
/// # Safety
/// `bundle` must come from [`fa_audit_run`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn fa_bundle_free(bundle: *mut FaBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}
