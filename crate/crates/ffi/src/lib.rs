//! C ABI over screenforge. Objects live behind opaque handles released by
//! their `*_free` function; every call returns an [`SfStatus`] and leaves
//! a message for [`sf_last_error`] on failure.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use screenforge::mech::{revenue_report, solve_thresholds, uniform_gamma_grid, upfront_t1, ThresholdMechanism};
use screenforge::model::{FamilySpec, JointModel, QuadOptions};
use screenforge::oracle::{
    discretize, separate_selling_value, solve_relaxed, solve_sequential, solve_simultaneous, DiscreteInstance, GridSpec,
    OracleError, OrthogonalInstance,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ModelError = 3,
    SolverError = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfRegime {
    Simultaneous = 0,
    Sequential = 1,
    Relaxed = 2,
    Separate = 3,
}

/// A model family with its quadrature settings.
pub struct SfModel {
    model: JointModel,
    quad: QuadOptions,
}

/// A solved option menu with upfront fees.
pub struct SfMechanism {
    mech: ThresholdMechanism,
}

/// A discretized instance for the LP oracle.
pub struct SfInstance {
    inst: DiscreteInstance,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn fail(status: SfStatus, msg: impl std::fmt::Display) -> SfStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.to_string().into_bytes());
    status
}

fn guard<F: FnOnce() -> SfStatus>(f: F) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(SfStatus::Panic, "internal panic"),
    }
}

unsafe fn text<'a>(ptr: *const c_char) -> Result<&'a str, SfStatus> {
    if ptr.is_null() {
        return Err(fail(SfStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(ptr).to_str().map_err(|e| fail(SfStatus::InvalidArgument, e))
}

fn oracle_status(e: OracleError) -> SfStatus {
    match e {
        OracleError::InvalidInstance(_) | OracleError::ShapeMismatch(_) => fail(SfStatus::InvalidArgument, e),
        OracleError::Model(_) | OracleError::DegenerateCell(_) => fail(SfStatus::ModelError, e),
        _ => fail(SfStatus::SolverError, e),
    }
}

macro_rules! nonnull {
    ($($p:expr),+) => {
        if $($p.is_null())||+ {
            return fail(SfStatus::NullPointer, "null pointer argument");
        }
    };
}

/// Version string of the library; static, never freed.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message, NUL-terminated, into
/// `buf`. `len` receives the required size including the terminator.
///
/// # Safety
/// `buf` must be writable for `cap` bytes or null; `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_last_error(buf: *mut c_char, cap: usize, len: *mut usize) -> SfStatus {
    nonnull!(len);
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        *len = msg.len() + 1;
        if buf.is_null() || cap < msg.len() + 1 {
            return SfStatus::BufferTooSmall;
        }
        std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast(), msg.len());
        *buf.add(msg.len()) = 0;
        SfStatus::Ok
    })
}

/// Builds a model from a family JSON object such as
/// `{"name": "cl-uniform", "goods": 2}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_model_new(json: *const c_char, out: *mut *mut SfModel) -> SfStatus {
    guard(|| {
        nonnull!(out);
        let json = match text(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let spec: FamilySpec = match serde_json::from_str(json) {
            Ok(s) => s,
            Err(e) => return fail(SfStatus::InvalidArgument, e),
        };
        match spec.build() {
            Ok(model) => {
                *out = Box::into_raw(Box::new(SfModel { model, quad: QuadOptions::default() }));
                SfStatus::Ok
            }
            Err(e) => fail(SfStatus::ModelError, e),
        }
    })
}

/// # Safety
/// `model` must come from [`sf_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sf_model_free(model: *mut SfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_model_dim(model: *const SfModel, out: *mut usize) -> SfStatus {
    nonnull!(model, out);
    *out = (*model).model.dim();
    SfStatus::Ok
}

/// Joint density `f(theta | gamma)`; `theta` has `n` entries.
///
/// # Safety
/// Pointers must be valid and `theta` readable for `n` values.
#[no_mangle]
pub unsafe extern "C" fn sf_model_density(
    model: *const SfModel,
    gamma: f64,
    theta: *const f64,
    n: usize,
    out: *mut f64,
) -> SfStatus {
    guard(|| {
        nonnull!(model, theta, out);
        let m = &(*model).model;
        if n != m.dim() {
            return fail(SfStatus::InvalidArgument, format!("expected {} values", m.dim()));
        }
        *out = m.joint_density(gamma, std::slice::from_raw_parts(theta, n));
        SfStatus::Ok
    })
}

/// Solves strikes and upfront fees on `gamma_points` equally spaced types.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_mechanism_solve(model: *const SfModel, gamma_points: usize, out: *mut *mut SfMechanism) -> SfStatus {
    guard(|| {
        nonnull!(model, out);
        if gamma_points < 2 {
            return fail(SfStatus::InvalidArgument, "need at least 2 grid points");
        }
        let SfModel { model, quad } = &*model;
        let grid = uniform_gamma_grid(model, gamma_points);
        let solved = solve_thresholds(model, &grid).and_then(|mut m| upfront_t1(model, &mut m, quad).map(|_| m));
        match solved {
            Ok(mech) => {
                *out = Box::into_raw(Box::new(SfMechanism { mech }));
                SfStatus::Ok
            }
            Err(e) => fail(SfStatus::SolverError, e),
        }
    })
}

/// # Safety
/// `mech` must come from [`sf_mechanism_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sf_mechanism_free(mech: *mut SfMechanism) {
    if !mech.is_null() {
        drop(Box::from_raw(mech));
    }
}

/// Number of grid points of the menu.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_mechanism_len(mech: *const SfMechanism, out: *mut usize) -> SfStatus {
    nonnull!(mech, out);
    *out = (*mech).mech.gamma_grid.len();
    SfStatus::Ok
}

/// Grid point `i`: its type, upfront fee and `n` strike prices.
///
/// # Safety
/// Pointers must be valid and `strikes` writable for `n` values.
#[no_mangle]
pub unsafe extern "C" fn sf_mechanism_row(
    mech: *const SfMechanism,
    i: usize,
    gamma: *mut f64,
    upfront: *mut f64,
    strikes: *mut f64,
    n: usize,
) -> SfStatus {
    nonnull!(mech, gamma, upfront, strikes);
    let m = &(*mech).mech;
    if i >= m.gamma_grid.len() {
        return fail(SfStatus::InvalidArgument, format!("row {i} out of range"));
    }
    if n < m.dim() {
        return fail(SfStatus::BufferTooSmall, format!("need {} strikes", m.dim()));
    }
    *gamma = m.gamma_grid[i];
    *upfront = m.upfront[i];
    std::ptr::copy_nonoverlapping(m.strikes[i].as_ptr(), strikes, m.dim());
    SfStatus::Ok
}

/// Expected revenue as fees plus strike payments, and through the
/// information-rent form.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_mechanism_revenue(
    model: *const SfModel,
    mech: *const SfMechanism,
    direct: *mut f64,
    functional: *mut f64,
) -> SfStatus {
    guard(|| {
        nonnull!(model, mech, direct, functional);
        let SfModel { model, quad } = &*model;
        match revenue_report(model, &(*mech).mech, quad) {
            Ok(r) => {
                *direct = r.direct;
                *functional = r.functional;
                SfStatus::Ok
            }
            Err(e) => fail(SfStatus::SolverError, e),
        }
    })
}

/// Discretizes a model: `gamma_cells` types and `theta_cells[j]` cells for good `j`.
///
/// # Safety
/// Pointers must be valid and `theta_cells` readable for `n` values.
#[no_mangle]
pub unsafe extern "C" fn sf_instance_discretize(
    model: *const SfModel,
    gamma_cells: usize,
    theta_cells: *const usize,
    n: usize,
    out: *mut *mut SfInstance,
) -> SfStatus {
    guard(|| {
        nonnull!(model, theta_cells, out);
        let spec = GridSpec { gamma_cells, theta_cells: std::slice::from_raw_parts(theta_cells, n).to_vec() };
        match discretize(&(*model).model, &spec) {
            Ok(inst) => {
                *out = Box::into_raw(Box::new(SfInstance { inst }));
                SfStatus::Ok
            }
            Err(e) => oracle_status(e),
        }
    })
}

/// Loads an instance from its JSON dump.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_instance_from_json(json: *const c_char, out: *mut *mut SfInstance) -> SfStatus {
    guard(|| {
        nonnull!(out);
        let json = match text(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match DiscreteInstance::from_json(json) {
            Ok(inst) => {
                *out = Box::into_raw(Box::new(SfInstance { inst }));
                SfStatus::Ok
            }
            Err(e) => oracle_status(e),
        }
    })
}

/// # Safety
/// `inst` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sf_instance_free(inst: *mut SfInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Optimal expected revenue of the instance under `regime`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sf_oracle_value(inst: *const SfInstance, regime: SfRegime, out: *mut f64) -> SfStatus {
    guard(|| {
        nonnull!(inst, out);
        let inst = &(*inst).inst;
        let value = match regime {
            SfRegime::Simultaneous => solve_simultaneous(inst).map(|r| r.value),
            SfRegime::Sequential => solve_sequential(inst).map(|r| r.value),
            SfRegime::Relaxed => OrthogonalInstance::from_instance(inst).and_then(|o| solve_relaxed(&o)).map(|r| r.value),
            SfRegime::Separate => separate_selling_value(inst),
        };
        match value {
            Ok(v) => {
                *out = v;
                SfStatus::Ok
            }
            Err(e) => oracle_status(e),
        }
    })
}
