//! C ABI over `bisimlearn`.
//!
//! Objects are opaque handles created by `*_parse`, `*_learn`, `*_extract`
//! and released with the matching `*_free`. Fallible functions return a
//! [`BisimStatus`] and write results through out-pointers; on failure the
//! message is available from [`bisim_last_error`] on the same thread.
//! Strings returned through out-pointers are owned by the caller and must be
//! released with [`bisim_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::Duration;

use bisimlearn::cegis::{run, CegisConfig};
use bisimlearn::checker::{check, lift, parse_property_for};
use bisimlearn::model::{parse_system, SymbolicSystem};
use bisimlearn::quotient::{extract, Quotient};
use bisimlearn::smt::Solver;
use bisimlearn::templates::{ClassifierDoc, ClassifierTemplate, ParamAssignment};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BisimStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    LearnFailed = 4,
    Solver = 5,
    Check = 6,
    InvalidArgument = 7,
    Panic = 8,
}

/// A parsed transition system.
pub struct BisimSystem {
    sys: SymbolicSystem,
}

/// A classifier with concrete parameters, tied to the system it was
/// learned or loaded for.
pub struct BisimClassifier {
    template: ClassifierTemplate,
    params: ParamAssignment,
}

pub struct BisimQuotient {
    quotient: Quotient,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(BisimStatus, String);

type FfiResult = Result<(), Fail>;

fn guard(f: impl FnOnce() -> FfiResult) -> BisimStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BisimStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            BisimStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(BisimStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(BisimStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(BisimStatus::NullPointer, format!("{what} is null")))
}

fn out_check<T>(p: *mut T) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(BisimStatus::NullPointer, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

fn solver(cmd: Option<&str>, timeout_ms: u64) -> Solver {
    let timeout = if timeout_ms == 0 { Duration::from_secs(30) } else { Duration::from_millis(timeout_ms) };
    Solver::from_env(cmd, timeout)
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn bisim_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bisim_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a system description.
///
/// # Safety
/// `source` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bisim_system_parse(source: *const c_char, out: *mut *mut BisimSystem) -> BisimStatus {
    guard(|| {
        out_check(out)?;
        let src = str_arg(source, "source")?;
        let sys = parse_system(src).map_err(|e| Fail(BisimStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(BisimSystem { sys }));
        Ok(())
    })
}

/// # Safety
/// `sys` must be null or a handle from [`bisim_system_parse`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bisim_system_free(sys: *mut BisimSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Number of state variables, or 0 for a null handle.
///
/// # Safety
/// `sys` must be null or a live system handle.
#[no_mangle]
pub unsafe extern "C" fn bisim_system_num_vars(sys: *const BisimSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.sys.dim())
}

/// Learns a classifier. `solver_cmd` may be null to use the default solver;
/// `timeout_ms` 0 selects the default per-query timeout; `max_iters` 0
/// selects the default budget.
///
/// # Safety
/// `sys` must be a live system handle; `solver_cmd` null or NUL-terminated;
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bisim_learn(
    sys: *const BisimSystem,
    solver_cmd: *const c_char,
    seed: u64,
    timeout_ms: u64,
    max_iters: usize,
    out: *mut *mut BisimClassifier,
) -> BisimStatus {
    guard(|| {
        out_check(out)?;
        let sys = obj(sys, "system")?;
        let solver = solver(opt_str_arg(solver_cmd, "solver_cmd")?, timeout_ms);
        let mut cfg = CegisConfig { seed, timeout: solver.timeout(), ..CegisConfig::default() };
        if max_iters > 0 {
            cfg.max_iters = max_iters;
        }
        let learned = run(&sys.sys, &cfg, &solver).map_err(|f| Fail(BisimStatus::LearnFailed, f.to_string()))?;
        *out = Box::into_raw(Box::new(BisimClassifier { template: learned.template, params: learned.params }));
        Ok(())
    })
}

/// Loads a classifier saved as JSON for `sys`.
///
/// # Safety
/// `sys` must be a live system handle; `json` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bisim_classifier_from_json(
    sys: *const BisimSystem,
    json: *const c_char,
    out: *mut *mut BisimClassifier,
) -> BisimStatus {
    guard(|| {
        out_check(out)?;
        let sys = obj(sys, "system")?;
        let doc: ClassifierDoc = serde_json::from_str(str_arg(json, "json")?)
            .map_err(|e| Fail(BisimStatus::Parse, e.to_string()))?;
        let (template, params) = doc.resolve(&sys.sys).map_err(|e| Fail(BisimStatus::InvalidArgument, e.to_string()))?;
        *out = Box::into_raw(Box::new(BisimClassifier { template, params }));
        Ok(())
    })
}

/// Serializes a classifier to JSON.
///
/// # Safety
/// Handles must be live; `out` writable. The result must be released with
/// [`bisim_string_free`].
#[no_mangle]
pub unsafe extern "C" fn bisim_classifier_to_json(
    sys: *const BisimSystem,
    classifier: *const BisimClassifier,
    out: *mut *mut c_char,
) -> BisimStatus {
    guard(|| {
        out_check(out)?;
        let sys = obj(sys, "system")?;
        let c = obj(classifier, "classifier")?;
        let doc = ClassifierDoc::new(&sys.sys, &c.template, &c.params);
        let json = serde_json::to_string_pretty(&doc).map_err(|e| Fail(BisimStatus::InvalidArgument, e.to_string()))?;
        *out = to_c_string(json);
        Ok(())
    })
}

/// Number of template classes, or 0 for a null handle.
///
/// # Safety
/// `classifier` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bisim_classifier_num_classes(classifier: *const BisimClassifier) -> usize {
    classifier.as_ref().map_or(0, |c| c.template.num_classes())
}

/// # Safety
/// `classifier` must be null or a live handle, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bisim_classifier_free(classifier: *mut BisimClassifier) {
    if !classifier.is_null() {
        drop(Box::from_raw(classifier));
    }
}

/// Builds the quotient induced by a classifier.
///
/// # Safety
/// Handles must be live; `solver_cmd` null or NUL-terminated; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn bisim_quotient_extract(
    sys: *const BisimSystem,
    classifier: *const BisimClassifier,
    solver_cmd: *const c_char,
    timeout_ms: u64,
    out: *mut *mut BisimQuotient,
) -> BisimStatus {
    guard(|| {
        out_check(out)?;
        let sys = obj(sys, "system")?;
        let c = obj(classifier, "classifier")?;
        let solver = solver(opt_str_arg(solver_cmd, "solver_cmd")?, timeout_ms);
        let quotient =
            extract(&sys.sys, &c.template, &c.params, &solver).map_err(|e| Fail(BisimStatus::Solver, e.to_string()))?;
        *out = Box::into_raw(Box::new(BisimQuotient { quotient }));
        Ok(())
    })
}

/// Number of nonempty classes, or 0 for a null handle.
///
/// # Safety
/// `q` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bisim_quotient_num_classes(q: *const BisimQuotient) -> usize {
    q.as_ref().map_or(0, |q| q.quotient.classes.len())
}

/// Number of edges, or 0 for a null handle.
///
/// # Safety
/// `q` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bisim_quotient_num_edges(q: *const BisimQuotient) -> usize {
    q.as_ref().map_or(0, |q| q.quotient.edges.len())
}

/// Renders the quotient as `"dot"` or `"json"`.
///
/// # Safety
/// `q` must be live; `format` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn bisim_quotient_export(
    q: *const BisimQuotient,
    format: *const c_char,
    out: *mut *mut c_char,
) -> BisimStatus {
    guard(|| {
        out_check(out)?;
        let q = obj(q, "quotient")?;
        let text = q
            .quotient
            .export(str_arg(format, "format")?)
            .map_err(|e| Fail(BisimStatus::InvalidArgument, e.to_string()))?;
        *out = to_c_string(text);
        Ok(())
    })
}

/// # Safety
/// `q` must be null or a live handle, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bisim_quotient_free(q: *mut BisimQuotient) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Checks `property` on the quotient. Writes whether every initial class
/// satisfies it to `holds` and, if `condition` is non-null, the initial
/// states satisfying it as a predicate in the system syntax.
///
/// # Safety
/// Handles must be live and belong together; `property` NUL-terminated;
/// `holds` writable; `condition` null or writable.
#[no_mangle]
pub unsafe extern "C" fn bisim_check(
    sys: *const BisimSystem,
    classifier: *const BisimClassifier,
    q: *const BisimQuotient,
    property: *const c_char,
    holds: *mut bool,
    condition: *mut *mut c_char,
) -> BisimStatus {
    guard(|| {
        out_check(holds)?;
        let sys = obj(sys, "system")?;
        let c = obj(classifier, "classifier")?;
        let q = obj(q, "quotient")?;
        let alphabet = sys.sys.label_names().into_iter().collect();
        let f = parse_property_for(str_arg(property, "property")?, &alphabet)
            .map_err(|e| Fail(BisimStatus::Parse, e.to_string()))?;
        let v = check(&q.quotient, &f, sys.sys.label_names()).map_err(|e| Fail(BisimStatus::Check, e.to_string()))?;
        *holds = v.holds;
        if !condition.is_null() {
            let pred = lift(&sys.sys, &c.template, &c.params, &v);
            *condition = to_c_string(pred.display(sys.sys.vars()).to_string());
        }
        Ok(())
    })
}
