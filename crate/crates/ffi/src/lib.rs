//! C ABI over `qbsde`.
//!
//! Every fallible call returns a [`QbsdeStatus`]; on failure the message is
//! kept per thread and read with [`qbsde_last_error`]. Handles are opaque and
//! released with their `_free` function. No call unwinds across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qbsde::cli::{run_scenario, Outcome};
use qbsde::coeff::{u_table, CoefficientConfig, TransformTable};
use qbsde::config::{parse_toml, Scenario};
use qbsde::pure::{exact_y0, TerminalCondition, TerminalSpec};
use qbsde::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QbsdeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Precondition = 4,
    Numerical = 5,
    Io = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// Parsed scenario.
pub struct QbsdeScenario {
    inner: Scenario,
}

/// Result of running a scenario.
pub struct QbsdeOutcome {
    inner: Outcome,
    error: Option<CString>,
}

/// Tabulated `u^f`.
pub struct QbsdeTransform {
    inner: TransformTable,
}

/// One check of an outcome. `criterion` is 0 when the check feeds none.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct QbsdeCheck {
    pub criterion: u32,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &Error) -> QbsdeStatus {
    match e {
        Error::Config { .. } | Error::Format(_) | Error::Json(_) => QbsdeStatus::Config,
        Error::Precondition(_) | Error::InvalidComparison(_) | Error::Cfl(_) => QbsdeStatus::Precondition,
        Error::Io(_) | Error::Csv(_) => QbsdeStatus::Io,
        _ => QbsdeStatus::Numerical,
    }
}

/// Runs `f`, turning errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (QbsdeStatus, String)>) -> QbsdeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            QbsdeStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            QbsdeStatus::Panic
        }
    }
}

fn lib(e: Error) -> (QbsdeStatus, String) {
    (status_of(&e), e.to_string())
}

/// # Safety
/// `p` is null or a NUL-terminated string.
unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (QbsdeStatus, String)> {
    if p.is_null() {
        return Err((QbsdeStatus::NullPointer, format!("`{what}` is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (QbsdeStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

fn null(what: &str) -> (QbsdeStatus, String) {
    (QbsdeStatus::NullPointer, format!("`{what}` is null"))
}

/// Message of the latest call on this thread if it failed, else null.
/// Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn qbsde_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn qbsde_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a scenario from TOML text.
///
/// # Safety
/// `toml` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn qbsde_scenario_parse(toml: *const c_char, out: *mut *mut QbsdeScenario) -> QbsdeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(toml, "toml")?;
        let inner = Scenario::parse(text).map_err(lib)?;
        *out = Box::into_raw(Box::new(QbsdeScenario { inner }));
        Ok(())
    })
}

/// Loads a scenario file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn qbsde_scenario_load(path: *const c_char, out: *mut *mut QbsdeScenario) -> QbsdeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = read_str(path, "path")?;
        let inner = Scenario::load(Path::new(path)).map_err(lib)?;
        *out = Box::into_raw(Box::new(QbsdeScenario { inner }));
        Ok(())
    })
}

/// Replaces the seed.
///
/// # Safety
/// `s` is a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn qbsde_scenario_set_seed(s: *mut QbsdeScenario, seed: u64) -> QbsdeStatus {
    guard(|| {
        let s = s.as_mut().ok_or_else(|| null("scenario"))?;
        s.inner.seed = seed;
        Ok(())
    })
}

/// Runs a scenario, writing artifacts under `out_dir/<name>/`. A failing
/// check is not an error; inspect the outcome.
///
/// # Safety
/// `s` is a live scenario handle; `out_dir` a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qbsde_scenario_run(
    s: *const QbsdeScenario,
    out_dir: *const c_char,
    out: *mut *mut QbsdeOutcome,
) -> QbsdeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let s = s.as_ref().ok_or_else(|| null("scenario"))?;
        let dir = read_str(out_dir, "out_dir")?;
        let inner = run_scenario(&s.inner, Path::new(dir));
        let error = inner.error.as_ref().and_then(|e| CString::new(e.replace('\0', " ")).ok());
        *out = Box::into_raw(Box::new(QbsdeOutcome { inner, error }));
        Ok(())
    })
}

/// # Safety
/// `s` is null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qbsde_scenario_free(s: *mut QbsdeScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// True iff the scenario ran and every check passed.
///
/// # Safety
/// `o` is null or a live outcome handle.
#[no_mangle]
pub unsafe extern "C" fn qbsde_outcome_pass(o: *const QbsdeOutcome) -> bool {
    o.as_ref().is_some_and(|o| o.inner.pass)
}

/// # Safety
/// `o` is null or a live outcome handle.
#[no_mangle]
pub unsafe extern "C" fn qbsde_outcome_check_count(o: *const QbsdeOutcome) -> usize {
    o.as_ref().map_or(0, |o| o.inner.checks.len())
}

/// # Safety
/// `o` is a live outcome handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn qbsde_outcome_check(o: *const QbsdeOutcome, index: usize, out: *mut QbsdeCheck) -> QbsdeStatus {
    guard(|| {
        let o = o.as_ref().ok_or_else(|| null("outcome"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let c = o.inner.checks.get(index).ok_or_else(|| {
            (QbsdeStatus::OutOfRange, format!("check {index} of {}", o.inner.checks.len()))
        })?;
        *out = QbsdeCheck { criterion: c.criterion.unwrap_or(0), value: c.value, threshold: c.threshold, pass: c.pass };
        Ok(())
    })
}

/// Error text of a scenario that did not complete, or null.
///
/// # Safety
/// `o` is null or a live outcome handle; the string lives as long as `o`.
#[no_mangle]
pub unsafe extern "C" fn qbsde_outcome_error(o: *const QbsdeOutcome) -> *const c_char {
    o.as_ref().and_then(|o| o.error.as_ref()).map_or(ptr::null(), |e| e.as_ptr())
}

/// # Safety
/// `o` is null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qbsde_outcome_free(o: *mut QbsdeOutcome) {
    if !o.is_null() {
        drop(Box::from_raw(o));
    }
}

/// Tabulates `u^f` for a coefficient given as TOML, e.g.
/// `kind = "indicator"\nc = 0.5\na = 1.0`.
///
/// # Safety
/// `coefficient_toml` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn qbsde_transform_new(
    coefficient_toml: *const c_char,
    out: *mut *mut QbsdeTransform,
) -> QbsdeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(coefficient_toml, "coefficient_toml")?;
        let cfg: CoefficientConfig = parse_toml(text).map_err(lib)?;
        let inner = u_table(&cfg.build().map_err(lib)?).map_err(lib)?;
        *out = Box::into_raw(Box::new(QbsdeTransform { inner }));
        Ok(())
    })
}

/// `u(x)` and `u'(x)`.
///
/// # Safety
/// `t` is a live transform handle; `value` and `deriv` are writable or null.
#[no_mangle]
pub unsafe extern "C" fn qbsde_transform_eval(t: *const QbsdeTransform, x: f64, value: *mut f64, deriv: *mut f64) -> QbsdeStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("transform"))?;
        let (u, du) = t.inner.eval(x);
        if let Some(v) = value.as_mut() {
            *v = u;
        }
        if let Some(d) = deriv.as_mut() {
            *d = du;
        }
        Ok(())
    })
}

/// `u⁻¹(y)`.
///
/// # Safety
/// `t` is a live transform handle; `x` is writable.
#[no_mangle]
pub unsafe extern "C" fn qbsde_transform_invert(t: *const QbsdeTransform, y: f64, x: *mut f64) -> QbsdeStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("transform"))?;
        let x = x.as_mut().ok_or_else(|| null("x"))?;
        *x = t.inner.invert(y);
        Ok(())
    })
}

/// The distortion constant `M = exp(2∫|f|)`.
///
/// # Safety
/// `t` is null or a live transform handle. Returns NaN for null.
#[no_mangle]
pub unsafe extern "C" fn qbsde_transform_mass(t: *const QbsdeTransform) -> f64 {
    t.as_ref().map_or(f64::NAN, |t| t.inner.mass_constant())
}

/// # Safety
/// `t` is null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn qbsde_transform_free(t: *mut QbsdeTransform) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// `Y₀` of `dY = −f(Y)|Z|² dt + Z dW`, `Y_T = g(W_T)`, by quadrature.
/// Both arguments are TOML tables: a coefficient and a terminal function.
///
/// # Safety
/// Strings are NUL-terminated; `y0` is writable.
#[no_mangle]
pub unsafe extern "C" fn qbsde_pure_exact_y0(
    coefficient_toml: *const c_char,
    terminal_toml: *const c_char,
    horizon: f64,
    y0: *mut f64,
) -> QbsdeStatus {
    guard(|| {
        let y0 = y0.as_mut().ok_or_else(|| null("y0"))?;
        let c: CoefficientConfig = parse_toml(read_str(coefficient_toml, "coefficient_toml")?).map_err(lib)?;
        let g = parse_toml(read_str(terminal_toml, "terminal_toml")?).map_err(lib)?;
        let spec = TerminalSpec { g, state: None, p_integrability: 2.0 };
        let xi = TerminalCondition::from_spec(&spec, 0.0).map_err(lib)?;
        *y0 = exact_y0(&c.build().map_err(lib)?, &xi, horizon).map_err(lib)?;
        Ok(())
    })
}
