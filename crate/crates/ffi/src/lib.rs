//! C ABI for quota plans and the admission ledger.
//!
//! Plans and ledgers are opaque handles. Documents cross the boundary as
//! NUL-terminated UTF-8 JSON in the same shapes the CLI and HTTP service
//! use. Every fallible call returns an [`SqStatus`]; on failure the message
//! is available from [`sq_last_error`] on the same thread.
//!
//! The ledger here is in memory only. Hosts that need durability persist
//! the events from [`sq_ledger_events_since`] and rebuild with
//! [`sq_ledger_replay`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use sitequota::ledger::{parse_events, CandidateSite, RecruitmentLedger};
use sitequota::plan::{build_plan, check_feasibility, load_plan, save_plan, QuotaPlan, Slack};
use sitequota::survey::PopulationEstimates;
use sitequota::{Error, ErrorClass};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidJson = 3,
    /// Input parsed but failed validation (including unclassifiable sites).
    Validation = 4,
    /// Well-formed input the method cannot act on, such as a duplicate site.
    Domain = 5,
    Io = 6,
    Panic = 7,
}

/// Opaque quota plan.
pub struct SqPlan {
    plan: Arc<QuotaPlan>,
}

/// Opaque admission ledger.
pub struct SqLedger {
    ledger: RecruitmentLedger,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(message));
}

struct Failure(SqStatus, String);

impl<E: Into<Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        let status = match e.class() {
            ErrorClass::Validation => SqStatus::Validation,
            ErrorClass::Domain => SqStatus::Domain,
            ErrorClass::Io => SqStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SqStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SqStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SqStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(SqStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(SqStatus::InvalidUtf8, format!("{name}: {e}")))
}

fn json_arg<T: serde::de::DeserializeOwned>(text: &str, name: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| Failure(SqStatus::InvalidJson, format!("{name}: {e}")))
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(SqStatus::NullArgument, format!("{name} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut *mut T, name: &str) -> Result<&'a mut *mut T, Failure> {
    let out = p
        .as_mut()
        .ok_or_else(|| Failure(SqStatus::NullArgument, format!("{name} is null")))?;
    *out = ptr::null_mut();
    Ok(out)
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s).expect("JSON has no interior NUL").into_raw()
}

fn write_json<T: serde::Serialize>(out: &mut *mut c_char, value: &T) {
    *out = to_c_string(serde_json::to_string(value).expect("serializable"));
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn sq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn sq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates a plan document.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sq_plan_from_json(json: *const c_char, out: *mut *mut SqPlan) -> SqStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let text = str_arg(json, "json")?;
        let (plan, _warnings) = load_plan(text).map_err(|e| match e {
            sitequota::plan::PlanError::Json(e) => Failure(SqStatus::InvalidJson, e.to_string()),
            other => other.into(),
        })?;
        *out = Box::into_raw(Box::new(SqPlan { plan: Arc::new(plan) }));
        Ok(())
    })
}

/// Builds a plan for `total` sites from a population-estimates document,
/// with uniform slack `delta`.
///
/// # Safety
/// `estimates_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sq_plan_build(
    estimates_json: *const c_char,
    total: u32,
    delta: f64,
    out: *mut *mut SqPlan,
) -> SqStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let estimates: PopulationEstimates = json_arg(str_arg(estimates_json, "estimates_json")?, "estimates_json")?;
        estimates.validate()?;
        let plan = build_plan(&estimates, total, &Slack::uniform(delta))?;
        *out = Box::into_raw(Box::new(SqPlan { plan: Arc::new(plan) }));
        Ok(())
    })
}

/// Serializes a plan. Free the result with [`sq_string_free`].
///
/// # Safety
/// `plan` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sq_plan_to_json(plan: *const SqPlan, out: *mut *mut c_char) -> SqStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = to_c_string(save_plan(&handle(plan, "plan")?.plan));
        Ok(())
    })
}

/// Feasibility report as JSON.
///
/// # Safety
/// `plan` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sq_plan_feasibility(plan: *const SqPlan, out: *mut *mut c_char) -> SqStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        write_json(out, &check_feasibility(&handle(plan, "plan")?.plan));
        Ok(())
    })
}

/// # Safety
/// `plan` must be a handle from this library, or NULL.
#[no_mangle]
pub unsafe extern "C" fn sq_plan_free(plan: *mut SqPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// A fresh ledger. The ledger keeps its own reference to the plan, so the
/// plan handle may be freed afterwards.
///
/// # Safety
/// `plan` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sq_ledger_new(plan: *const SqPlan, out: *mut *mut SqLedger) -> SqStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let plan = handle(plan, "plan")?.plan.clone();
        *out = Box::into_raw(Box::new(SqLedger {
            ledger: RecruitmentLedger::new(plan),
        }));
        Ok(())
    })
}

/// Rebuilds a ledger from newline-delimited event JSON, checking every
/// event against the plan.
///
/// # Safety
/// `plan` must be a live handle; `events_ndjson` a NUL-terminated string;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sq_ledger_replay(
    plan: *const SqPlan,
    events_ndjson: *const c_char,
    out: *mut *mut SqLedger,
) -> SqStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let plan = handle(plan, "plan")?.plan.clone();
        let events = parse_events(str_arg(events_ndjson, "events_ndjson")?.as_bytes())?;
        *out = Box::into_raw(Box::new(SqLedger {
            ledger: RecruitmentLedger::replay(plan, events)?,
        }));
        Ok(())
    })
}

/// # Safety
/// `ledger` must be a handle from this library, or NULL.
#[no_mangle]
pub unsafe extern "C" fn sq_ledger_free(ledger: *mut SqLedger) {
    if !ledger.is_null() {
        drop(Box::from_raw(ledger));
    }
}

fn site_arg(json: *const c_char) -> Result<CandidateSite, Failure> {
    // SAFETY: forwarded from the caller's contract.
    json_arg(unsafe { str_arg(json, "site_json")? }, "site_json")
}

/// Adjudicates a site and records the outcome. A rejection is
/// [`SqStatus::Ok`] with `"verdict": "rejected"` in the decision.
///
/// # Safety
/// `ledger` must be a live handle not used concurrently; `site_json` a
/// NUL-terminated string; `out_decision` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sq_ledger_admit(
    ledger: *mut SqLedger,
    site_json: *const c_char,
    out_decision: *mut *mut c_char,
) -> SqStatus {
    guard(|| {
        let out = out_ptr(out_decision, "out_decision")?;
        let ledger = ledger
            .as_mut()
            .ok_or_else(|| Failure(SqStatus::NullArgument, "ledger is null".into()))?;
        let decision = ledger.ledger.admit(&site_arg(site_json)?)?;
        write_json(out, &decision);
        Ok(())
    })
}

/// Adjudicates a site without recording anything.
///
/// # Safety
/// `ledger` must be a live handle; `site_json` a NUL-terminated string;
/// `out_decision` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sq_ledger_what_if(
    ledger: *const SqLedger,
    site_json: *const c_char,
    out_decision: *mut *mut c_char,
) -> SqStatus {
    guard(|| {
        let out = out_ptr(out_decision, "out_decision")?;
        let decision = handle(ledger, "ledger")?.ledger.what_if(&site_arg(site_json)?)?;
        write_json(out, &decision);
        Ok(())
    })
}

/// Withdraws an accepted site; writes the event's sequence number.
///
/// # Safety
/// `ledger` must be a live handle not used concurrently; `site_id` a
/// NUL-terminated string; `out_seq` writable or NULL.
#[no_mangle]
pub unsafe extern "C" fn sq_ledger_withdraw(
    ledger: *mut SqLedger,
    site_id: *const c_char,
    out_seq: *mut u64,
) -> SqStatus {
    guard(|| {
        let ledger = ledger
            .as_mut()
            .ok_or_else(|| Failure(SqStatus::NullArgument, "ledger is null".into()))?;
        let seq = ledger.ledger.withdraw(str_arg(site_id, "site_id")?)?;
        if let Some(out) = out_seq.as_mut() {
            *out = seq;
        }
        Ok(())
    })
}

/// Progress report as JSON.
///
/// # Safety
/// `ledger` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sq_ledger_status(ledger: *const SqLedger, out: *mut *mut c_char) -> SqStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        write_json(out, &handle(ledger, "ledger")?.ledger.status());
        Ok(())
    })
}

/// Events with `seq > since`, as newline-delimited JSON (the on-disk log
/// format).
///
/// # Safety
/// `ledger` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sq_ledger_events_since(
    ledger: *const SqLedger,
    since: u64,
    out: *mut *mut c_char,
) -> SqStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let mut text = String::new();
        for event in handle(ledger, "ledger")?.ledger.events_since(since) {
            text.push_str(&serde_json::to_string(event).expect("serializable"));
            text.push('\n');
        }
        *out = to_c_string(text);
        Ok(())
    })
}

/// Sequence number of the last event, 0 for a fresh ledger or NULL.
///
/// # Safety
/// `ledger` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn sq_ledger_last_seq(ledger: *const SqLedger) -> u64 {
    ledger.as_ref().map_or(0, |l| l.ledger.last_seq())
}
