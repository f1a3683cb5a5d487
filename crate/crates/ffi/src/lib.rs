//! C ABI for the predictive mechanism.
//!
//! A `GeoindMechanism` is an opaque handle owning one run, its budget
//! manager and its random stream. Every function returns a `GeoindStatus`;
//! on failure `geoind_last_error_message` describes the most recent error
//! on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use geoind::budget::{Manager, ManagerConfig, SkipPolicy};
use geoind::mechanism::{Parrot, PredictiveMechanism, Query, Skip};
use geoind::noise::{icll, icpl, PlanarPoint};
use geoind::rng::seeded;
use geoind::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeoindStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BudgetExhausted = 3,
    Panic = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeoindSkip {
    None = 0,
    ForcedEasy = 1,
    ForcedHard = 2,
}

/// One sanitized answer.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoindReport {
    pub x: f64,
    pub y: f64,
    /// 1 when fresh noise was reported, 0 when the prediction was.
    pub hard: u8,
    pub skipped: GeoindSkip,
    pub spent_test: f64,
    pub spent_noise: f64,
}

/// Opaque mechanism handle.
pub struct GeoindMechanism {
    inner: PredictiveMechanism<Manager, Parrot>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> GeoindStatus {
    set_error(err.to_string());
    match err {
        Error::BudgetExhausted => GeoindStatus::BudgetExhausted,
        _ => GeoindStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> GeoindStatus) -> GeoindStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == GeoindStatus::Ok {
                LAST_ERROR.with(|e| *e.borrow_mut() = None);
            }
            s
        }
        Err(_) => {
            set_error("internal panic");
            GeoindStatus::Panic
        }
    }
}

fn skip_policy(v_max_mps: f64) -> SkipPolicy {
    if v_max_mps > 0.0 {
        SkipPolicy::with_time_based(v_max_mps)
    } else {
        SkipPolicy::default()
    }
}

unsafe fn create(cfg: ManagerConfig, seed: u64, out: *mut *mut GeoindMechanism) -> GeoindStatus {
    if out.is_null() {
        set_error("out is null");
        return GeoindStatus::NullPointer;
    }
    match Manager::new(cfg) {
        Ok(m) => {
            let h = Box::new(GeoindMechanism {
                inner: PredictiveMechanism::new(m, Parrot, seeded(seed)),
            });
            *out = Box::into_raw(h);
            GeoindStatus::Ok
        }
        Err(e) => status_of(&e),
    }
}

/// Creates a fixed-rate mechanism with the library's default η, γ, δ and
/// PR estimate. `v_max_mps > 0` enables the elapsed-time skip.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn geoind_mechanism_new_fixed_rate(
    seed: u64,
    eps_total: f64,
    rho: f64,
    v_max_mps: f64,
    out: *mut *mut GeoindMechanism,
) -> GeoindStatus {
    guard(|| {
        let cfg = ManagerConfig::fixed_rate(eps_total, rho).with_skip(skip_policy(v_max_mps));
        create(cfg, seed, out)
    })
}

/// Creates a fixed-utility mechanism targeting `alpha_m` meters.
///
/// # Safety
/// `out` must be valid for a pointer write.
#[no_mangle]
pub unsafe extern "C" fn geoind_mechanism_new_fixed_utility(
    seed: u64,
    eps_total: f64,
    alpha_m: f64,
    v_max_mps: f64,
    out: *mut *mut GeoindMechanism,
) -> GeoindStatus {
    guard(|| {
        let cfg =
            ManagerConfig::fixed_utility(eps_total, alpha_m).with_skip(skip_policy(v_max_mps));
        create(cfg, seed, out)
    })
}

/// Sanitizes the planar point `(x, y)` queried at time `t` (seconds).
///
/// # Safety
/// `handle` must come from a constructor and not be freed; `out` must be
/// valid for a write.
#[no_mangle]
pub unsafe extern "C" fn geoind_mechanism_report(
    handle: *mut GeoindMechanism,
    x: f64,
    y: f64,
    t: f64,
    out: *mut GeoindReport,
) -> GeoindStatus {
    guard(|| {
        if handle.is_null() || out.is_null() {
            set_error("handle or out is null");
            return GeoindStatus::NullPointer;
        }
        let point = PlanarPoint::new(x, y);
        if !point.is_finite() || !t.is_finite() {
            set_error("coordinates and time must be finite");
            return GeoindStatus::InvalidArgument;
        }
        match (*handle).inner.report(&Query::new(point, t)) {
            Ok(s) => {
                *out = GeoindReport {
                    x: s.z.x,
                    y: s.z.y,
                    hard: s.outcome.bit(),
                    skipped: match s.skipped {
                        Skip::None => GeoindSkip::None,
                        Skip::ForcedEasy => GeoindSkip::ForcedEasy,
                        Skip::ForcedHard => GeoindSkip::ForcedHard,
                    },
                    spent_test: s.spent_test,
                    spent_noise: s.spent_noise,
                };
                GeoindStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Budget spent so far, or NaN for a null handle.
///
/// # Safety
/// `handle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn geoind_mechanism_spent(handle: *const GeoindMechanism) -> f64 {
    if handle.is_null() {
        return f64::NAN;
    }
    (*handle).inner.run().total_spend()
}

/// Number of answered queries, or 0 for a null handle.
///
/// # Safety
/// `handle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn geoind_mechanism_steps(handle: *const GeoindMechanism) -> usize {
    if handle.is_null() {
        return 0;
    }
    (*handle).inner.run().len()
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `handle` must be null or a live handle, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn geoind_mechanism_free(handle: *mut GeoindMechanism) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Radius within which planar Laplace noise at `eps` stays with probability
/// `delta`.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn geoind_icpl(eps: f64, delta: f64, out: *mut f64) -> GeoindStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return GeoindStatus::NullPointer;
        }
        match icpl(eps, delta) {
            Ok(v) => {
                *out = v;
                GeoindStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// Bound on linear Laplace noise at `eps` that holds with probability `delta`.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn geoind_icll(eps: f64, delta: f64, out: *mut f64) -> GeoindStatus {
    guard(|| {
        if out.is_null() {
            set_error("out is null");
            return GeoindStatus::NullPointer;
        }
        match icll(eps, delta) {
            Ok(v) => {
                *out = v;
                GeoindStatus::Ok
            }
            Err(e) => status_of(&e),
        }
    })
}

/// The last error on this thread, or null. Valid until the next call on the
/// same thread.
#[no_mangle]
pub extern "C" fn geoind_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}
