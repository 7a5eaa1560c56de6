//! C ABI over `contract_forge`.
//!
//! Objects cross the boundary as opaque handles that the caller releases
//! with the matching `*_free`. Every fallible call returns a [`CfStatus`];
//! the message of the last failure on the calling thread is available from
//! [`cf_last_error`]. Panics are caught and reported as `CF_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use contract_forge::duality::{Contract, Generator, Plan};
use contract_forge::equilibrium::{certify_unique_implementation, enumerate_equilibria, EnumOptions};
use contract_forge::order::Setting;
use contract_forge::scenarios::ScenarioConfig;
use contract_forge::synthesis::{
    build_full_access_contract, build_optimal_contract, build_partial_contract, discretize_menu, SynthesisResult,
    TargetOutcome,
};
use contract_forge::Error;

/// Call outcome. Codes 2 to 4 match the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8, index out of range.
    InvalidArgument = 1,
    Validation = 2,
    NotImplementable = 3,
    Numerical = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfMode {
    Robust = 0,
    FullAccess = 1,
}

/// A validated scenario with its response curve.
pub struct CfSetting {
    inner: Setting,
}

/// A synthesized transfer schedule.
pub struct CfSynthesis {
    inner: SynthesisResult,
}

/// A finite menu, optionally tied to the target it was built for.
pub struct CfContract {
    inner: Contract,
    target: Option<TargetOutcome>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CfStatus {
    match e.exit_code() {
        3 => CfStatus::NotImplementable,
        4 => CfStatus::Numerical,
        _ => CfStatus::Validation,
    }
}

struct Fail(CfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn bad(msg: &str) -> Fail {
    Fail(CfStatus::InvalidArgument, msg.to_string())
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> CfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CfStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            CfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(bad(&format!("{name} is null")));
    }
    // SAFETY: caller passes a NUL-terminated string.
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| bad(&format!("{name} is not valid UTF-8")))
}

unsafe fn obj<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    // SAFETY: non-null handles come from this library.
    unsafe { p.as_ref() }.ok_or_else(|| bad(&format!("{name} is null")))
}

fn out<T>(p: *mut T, v: T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        return Err(bad(&format!("{name} is null")));
    }
    // SAFETY: checked non-null; caller owns the slot.
    unsafe { p.write(v) };
    Ok(())
}

fn setting_from(cfg: &mut ScenarioConfig, grid: usize) -> Result<CfSetting, Fail> {
    if grid > 0 {
        cfg.grid.n_a = grid;
    }
    Ok(CfSetting { inner: Setting::from_config(cfg)? })
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn cf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cf_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: produced by CString::into_raw.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Builds a setting from a builtin scenario name or a config file path.
/// `grid = 0` keeps the configured action grid.
///
/// # Safety
/// `scenario` must be a NUL-terminated string; `out_setting` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn cf_setting_new(scenario: *const c_char, grid: usize, out_setting: *mut *mut CfSetting) -> CfStatus {
    guard(|| {
        let spec = unsafe { str_arg(scenario, "scenario") }?;
        let mut cfg = ScenarioConfig::resolve(spec)?;
        let s = setting_from(&mut cfg, grid)?;
        out(out_setting, Box::into_raw(Box::new(s)), "out_setting")
    })
}

/// Builds a setting from TOML config text.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out_setting` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn cf_setting_from_toml(toml: *const c_char, out_setting: *mut *mut CfSetting) -> CfStatus {
    guard(|| {
        let text = unsafe { str_arg(toml, "toml") }?;
        let mut cfg = ScenarioConfig::from_toml_str(text)?;
        let s = setting_from(&mut cfg, 0)?;
        out(out_setting, Box::into_raw(Box::new(s)), "out_setting")
    })
}

/// # Safety
/// `s` must come from `cf_setting_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cf_setting_free(s: *mut CfSetting) {
    if !s.is_null() {
        drop(unsafe { Box::from_raw(s) });
    }
}

/// Outside-option action.
///
/// # Safety
/// `s` must be a live setting handle.
#[no_mangle]
pub unsafe extern "C" fn cf_setting_a0(s: *const CfSetting, out_a0: *mut f64) -> CfStatus {
    guard(|| {
        let s = unsafe { obj(s, "setting") }?;
        out(out_a0, s.inner.a0(), "out_a0")
    })
}

/// Outsider best reply `r(a)`.
///
/// # Safety
/// `s` must be a live setting handle.
#[no_mangle]
pub unsafe extern "C" fn cf_setting_reply(s: *const CfSetting, a: f64, out_r: *mut f64) -> CfStatus {
    guard(|| {
        let s = unsafe { obj(s, "setting") }?;
        out(out_r, s.inner.reply(a)?, "out_r")
    })
}

/// 1 when every model assumption passed, 0 otherwise.
///
/// # Safety
/// `s` must be a live setting handle.
#[no_mangle]
pub unsafe extern "C" fn cf_setting_assumptions_passed(s: *const CfSetting, out_passed: *mut i32) -> CfStatus {
    guard(|| {
        let s = unsafe { obj(s, "setting") }?;
        out(out_passed, i32::from(s.inner.assumptions.passed()), "out_passed")
    })
}

fn target_of(s: &Setting, a1: f64, a2: f64, weight2: f64) -> Result<TargetOutcome, Fail> {
    Ok(if weight2 <= 0.0 || a2.is_nan() {
        TargetOutcome::pure(s, a1)?
    } else {
        TargetOutcome::new(s, &[(a1, 1.0 - weight2), (a2, weight2)])?
    })
}

/// Robust (or full-access) schedule for the target that plays `a1` with
/// probability `1 - weight2` and `a2` with `weight2`. Pass `weight2 = 0`
/// for a pure target.
///
/// # Safety
/// `s` must be a live setting handle; `out_synthesis` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn cf_synthesize(
    s: *const CfSetting,
    a1: f64,
    a2: f64,
    weight2: f64,
    mode: CfMode,
    out_synthesis: *mut *mut CfSynthesis,
) -> CfStatus {
    guard(|| {
        let s = &unsafe { obj(s, "setting") }?.inner;
        let t = target_of(s, a1, a2, weight2)?;
        let inner = match mode {
            CfMode::Robust => build_optimal_contract(s, &t)?,
            CfMode::FullAccess => build_full_access_contract(s, &t)?,
        };
        out(out_synthesis, Box::into_raw(Box::new(CfSynthesis { inner })), "out_synthesis")
    })
}

/// # Safety
/// `r` must come from `cf_synthesize` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cf_synthesis_free(r: *mut CfSynthesis) {
    if !r.is_null() {
        drop(unsafe { Box::from_raw(r) });
    }
}

/// Schedule value `t*(a)`.
///
/// # Safety
/// `r` must be a live synthesis handle.
#[no_mangle]
pub unsafe extern "C" fn cf_synthesis_transfer(r: *const CfSynthesis, a: f64, out_t: *mut f64) -> CfStatus {
    guard(|| {
        let r = unsafe { obj(r, "synthesis") }?;
        out(out_t, r.inner.transfer(a)?, "out_t")
    })
}

/// Value bound `U_0 + T_bar`.
///
/// # Safety
/// `r` must be a live synthesis handle.
#[no_mangle]
pub unsafe extern "C" fn cf_synthesis_bound(r: *const CfSynthesis, out_bound: *mut f64) -> CfStatus {
    guard(|| {
        let r = unsafe { obj(r, "synthesis") }?;
        out(out_bound, r.inner.bound.bound, "out_bound")
    })
}

/// Full synthesis report as JSON; release with `cf_string_free`.
///
/// # Safety
/// `r` must be a live synthesis handle.
#[no_mangle]
pub unsafe extern "C" fn cf_synthesis_report_json(r: *const CfSynthesis, out_json: *mut *mut c_char) -> CfStatus {
    guard(|| {
        let r = unsafe { obj(r, "synthesis") }?;
        let text = serde_json::to_string(&r.inner).map_err(|e| Fail(CfStatus::Validation, e.to_string()))?;
        let c = CString::new(text).map_err(|_| bad("report contains NUL"))?;
        out(out_json, c.into_raw(), "out_json")
    })
}

/// Finite menu `M_n` sampled from the schedule with `plans` plans.
///
/// # Safety
/// `r` must be a live synthesis handle; `out_contract` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn cf_synthesis_menu(
    r: *const CfSynthesis,
    n: u32,
    eps: f64,
    plans: usize,
    out_contract: *mut *mut CfContract,
) -> CfStatus {
    guard(|| {
        let r = unsafe { obj(r, "synthesis") }?;
        if n == 0 {
            return Err(bad("n must be at least 1"));
        }
        let inner = discretize_menu(&r.inner, n, eps, plans)?;
        let c = CfContract { inner, target: Some(r.inner.target.clone()) };
        out(out_contract, Box::into_raw(Box::new(c)), "out_contract")
    })
}

/// Partial-implementation menu for a pure target.
///
/// # Safety
/// `s` must be a live setting handle; `out_contract` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn cf_partial_menu(s: *const CfSetting, a: f64, out_contract: *mut *mut CfContract) -> CfStatus {
    guard(|| {
        let s = &unsafe { obj(s, "setting") }?.inner;
        let t = TargetOutcome::pure(s, a)?;
        let inner = build_partial_contract(s, &t)?;
        out(out_contract, Box::into_raw(Box::new(CfContract { inner, target: Some(t) })), "out_contract")
    })
}

/// Menu from raw plan arrays. The null plan is added if missing.
///
/// # Safety
/// `actions` and `transfers` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn cf_contract_from_plans(
    s: *const CfSetting,
    actions: *const f64,
    transfers: *const f64,
    len: usize,
    out_contract: *mut *mut CfContract,
) -> CfStatus {
    guard(|| {
        let s = &unsafe { obj(s, "setting") }?.inner;
        if len > 0 && (actions.is_null() || transfers.is_null()) {
            return Err(bad("plan arrays are null"));
        }
        let (xs, ts) = if len == 0 {
            (&[][..], &[][..])
        } else {
            // SAFETY: caller guarantees `len` elements.
            unsafe { (std::slice::from_raw_parts(actions, len), std::slice::from_raw_parts(transfers, len)) }
        };
        let plans = xs.iter().zip(ts).map(|(&action, &transfer)| Plan { action, transfer });
        let inner = Contract::new(s.model.as_ref(), plans, Generator::Custom)?;
        out(out_contract, Box::into_raw(Box::new(CfContract { inner, target: None })), "out_contract")
    })
}

/// # Safety
/// `c` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn cf_contract_free(c: *mut CfContract) {
    if !c.is_null() {
        drop(unsafe { Box::from_raw(c) });
    }
}

/// Number of plans.
///
/// # Safety
/// `c` must be a live contract handle.
#[no_mangle]
pub unsafe extern "C" fn cf_contract_len(c: *const CfContract, out_len: *mut usize) -> CfStatus {
    guard(|| {
        let c = unsafe { obj(c, "contract") }?;
        out(out_len, c.inner.len(), "out_len")
    })
}

/// Plan `i` in ascending action order.
///
/// # Safety
/// `c` must be a live contract handle.
#[no_mangle]
pub unsafe extern "C" fn cf_contract_plan(
    c: *const CfContract,
    i: usize,
    out_action: *mut f64,
    out_transfer: *mut f64,
) -> CfStatus {
    guard(|| {
        let c = unsafe { obj(c, "contract") }?;
        let p = c.inner.plans().get(i).ok_or_else(|| bad("plan index out of range"))?;
        out(out_action, p.action, "out_action")?;
        out(out_transfer, p.transfer, "out_transfer")
    })
}

/// Number of equilibria found with supports up to `support_cap`.
///
/// # Safety
/// `s` and `c` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn cf_contract_count_equilibria(
    s: *const CfSetting,
    c: *const CfContract,
    support_cap: usize,
    out_count: *mut usize,
) -> CfStatus {
    guard(|| {
        let s = &unsafe { obj(s, "setting") }?.inner;
        let c = unsafe { obj(c, "contract") }?;
        let opts = EnumOptions { support_cap, ..EnumOptions::default() };
        out(out_count, enumerate_equilibria(s, &c.inner, opts)?.count(), "out_count")
    })
}

/// Whether the menu uniquely implements the target it was built for
/// (1 yes, 0 no). Menus from raw plans have no target.
///
/// # Safety
/// `s` and `c` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn cf_contract_certify(
    s: *const CfSetting,
    c: *const CfContract,
    support_cap: usize,
    out_unique: *mut i32,
) -> CfStatus {
    guard(|| {
        let s = &unsafe { obj(s, "setting") }?.inner;
        let c = unsafe { obj(c, "contract") }?;
        let t = c.target.as_ref().ok_or_else(|| bad("contract has no target"))?;
        let opts = EnumOptions { support_cap, ..EnumOptions::default() };
        let cert = certify_unique_implementation(s, &c.inner, t, opts)?;
        out(out_unique, i32::from(cert.unique), "out_unique")
    })
}
