//! C interface to `crossover-core`.
//!
//! Objects are opaque heap handles created by `cx_*_new`/`cx_*_from_*` and
//! released with the matching `cx_*_free`. Every fallible call returns a
//! `CxStatus`; on failure `cx_last_error_message` describes the error for
//! the calling thread. Strings returned by the library are freed with
//! `cx_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use crossover_core::design::ExactDesign;
use crossover_core::evaluation::{evaluate, EvalOptions, Method, DEFAULT_EXACT_BUDGET};
use crossover_core::fixtures::fixture;
use crossover_core::information::Criterion;
use crossover_core::io::{
    certificate_to_json, design_from_json, design_to_json, mechanism_from_json,
};
use crossover_core::qsolver::{q_coeffs, solve_minimax, OptimalityCertificate, Regime};
use crossover_core::search::{build_system, exact_search, SearchOptions};
use crossover_core::{DropoutMechanism, Error, TreatmentSequence};

/// Dropout mechanism handle.
pub struct CxMechanism(DropoutMechanism);

/// Exact design handle.
pub struct CxDesign(ExactDesign);

/// Minimax certificate handle.
pub struct CxCertificate(OptimalityCertificate);

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CxStatus {
    Ok = 0,
    NullPointer = 1,
    Invalid = 2,
    Budget = 3,
    Singular = 4,
    Infeasible = 5,
    Io = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CxCriterion {
    A = 0,
    D = 1,
    E = 2,
    T = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CxMethod {
    Exact = 0,
    MonteCarlo = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CxRegime {
    ClosedFormI = 0,
    ClosedFormIi = 1,
    ClosedFormIiBoundary = 2,
    ClosedFormIii = 3,
    Numeric = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CxQCoefficients {
    pub q11: f64,
    pub q12: f64,
    pub q22: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CxCertificateSummary {
    pub x_star: f64,
    pub y_star: f64,
    pub t: usize,
    pub support_len: usize,
    pub regime: CxRegime,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CxReport {
    pub phi0: f64,
    pub phi0_stderr: f64,
    pub v_phi: f64,
    pub sd_phi: f64,
    pub phi1: f64,
    pub gap: f64,
    pub e1_tilde: f64,
    pub ell: f64,
    pub replications: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(CxStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Invalid(_) | Error::Json(_) => CxStatus::Invalid,
            Error::Budget { .. } => CxStatus::Budget,
            Error::Singular(_) => CxStatus::Singular,
            Error::Infeasible(_) => CxStatus::Infeasible,
            Error::Io(_) => CxStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(name: &str) -> Failure {
    Failure(CxStatus::NullPointer, format!("{name} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CxStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CxStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CxStatus::Invalid, format!("{name} is not valid UTF-8")))
}

unsafe fn put<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

fn owned_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(CxStatus::Invalid, "string contains NUL".into()))
}

/// Error message if the most recent call on this thread failed, else NULL.
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn cx_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be NULL or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn cx_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Mechanism with `p` periods, `n` subjects and dropout probabilities
/// `a[0..len]`.
///
/// # Safety
/// `a` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cx_mechanism_new(
    p: usize,
    n: usize,
    a: *const f64,
    len: usize,
    out: *mut *mut CxMechanism,
) -> CxStatus {
    guard(|| {
        if a.is_null() {
            return Err(null("a"));
        }
        let probs = std::slice::from_raw_parts(a, len).to_vec();
        let m = DropoutMechanism::new(p, n, probs)?;
        put(out, boxed(CxMechanism(m)), "out")
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cx_mechanism_from_json(
    json: *const c_char,
    out: *mut *mut CxMechanism,
) -> CxStatus {
    guard(|| {
        let m = mechanism_from_json(text(json, "json")?)?;
        put(out, boxed(CxMechanism(m)), "out")
    })
}

/// Dropout coefficient alpha_k for 1 <= k <= p.
///
/// # Safety
/// `mech` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cx_mechanism_alpha(
    mech: *const CxMechanism,
    k: usize,
    out: *mut f64,
) -> CxStatus {
    guard(|| {
        let a = get(mech, "mech")?.0.alpha(k)?;
        put(out, a, "out")
    })
}

/// # Safety
/// `mech` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn cx_mechanism_free(mech: *mut CxMechanism) {
    if !mech.is_null() {
        drop(Box::from_raw(mech));
    }
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cx_design_from_json(
    json: *const c_char,
    out: *mut *mut CxDesign,
) -> CxStatus {
    guard(|| {
        let d = design_from_json(text(json, "json")?)?;
        put(out, boxed(CxDesign(d)), "out")
    })
}

/// Built-in design `name` and the mechanism it was built for.
///
/// # Safety
/// `name` must be a NUL-terminated string; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn cx_design_fixture(
    name: *const c_char,
    design_out: *mut *mut CxDesign,
    mech_out: *mut *mut CxMechanism,
) -> CxStatus {
    guard(|| {
        if design_out.is_null() || mech_out.is_null() {
            return Err(null("output"));
        }
        let f = fixture(text(name, "name")?)?;
        put(design_out, boxed(CxDesign(f.design)), "design_out")?;
        put(mech_out, boxed(CxMechanism(f.mechanism)), "mech_out")
    })
}

/// Design serialized as JSON; free with `cx_string_free`.
///
/// # Safety
/// `design` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cx_design_to_json(
    design: *const CxDesign,
    out: *mut *mut c_char,
) -> CxStatus {
    guard(|| {
        let s = design_to_json(&get(design, "design")?.0)?;
        put(out, owned_string(s)?, "out")
    })
}

/// Number of subjects, or 0 for NULL.
///
/// # Safety
/// `design` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cx_design_subjects(design: *const CxDesign) -> usize {
    design.as_ref().map_or(0, |d| d.0.subjects())
}

/// # Safety
/// `design` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn cx_design_free(design: *mut CxDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

/// q-coefficients of `sequence` (e.g. "1234") with `t` treatments.
///
/// # Safety
/// `mech` must be a live handle, `sequence` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cx_q_coeffs(
    mech: *const CxMechanism,
    sequence: *const c_char,
    t: usize,
    out: *mut CxQCoefficients,
) -> CxStatus {
    guard(|| {
        let mech = &get(mech, "mech")?.0;
        let s = TreatmentSequence::parse(text(sequence, "sequence")?, t)?;
        let q = q_coeffs(&s, mech)?;
        put(
            out,
            CxQCoefficients {
                q11: q.q11,
                q12: q.q12,
                q22: q.q22,
            },
            "out",
        )
    })
}

/// Minimax certificate for `t` treatments.
///
/// # Safety
/// `mech` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cx_solve_minimax(
    mech: *const CxMechanism,
    t: usize,
    out: *mut *mut CxCertificate,
) -> CxStatus {
    guard(|| {
        let cert = solve_minimax(&get(mech, "mech")?.0, t)?;
        put(out, boxed(CxCertificate(cert)), "out")
    })
}

/// # Safety
/// `cert` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cx_certificate_summary(
    cert: *const CxCertificate,
    out: *mut CxCertificateSummary,
) -> CxStatus {
    guard(|| {
        let c = &get(cert, "cert")?.0;
        let regime = match c.regime {
            Regime::ClosedFormI => CxRegime::ClosedFormI,
            Regime::ClosedFormIi => CxRegime::ClosedFormIi,
            Regime::ClosedFormIiBoundary => CxRegime::ClosedFormIiBoundary,
            Regime::ClosedFormIii => CxRegime::ClosedFormIii,
            Regime::Numeric => CxRegime::Numeric,
        };
        let summary = CxCertificateSummary {
            x_star: c.x_star,
            y_star: c.y_star,
            t: c.t,
            support_len: c.support.len(),
            regime,
        };
        put(out, summary, "out")
    })
}

/// Certificate serialized as JSON; free with `cx_string_free`.
///
/// # Safety
/// `cert` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cx_certificate_to_json(
    cert: *const CxCertificate,
    out: *mut *mut c_char,
) -> CxStatus {
    guard(|| {
        let s = certificate_to_json(&get(cert, "cert")?.0)?;
        put(out, owned_string(s)?, "out")
    })
}

/// # Safety
/// `cert` must be NULL or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn cx_certificate_free(cert: *mut CxCertificate) {
    if !cert.is_null() {
        drop(Box::from_raw(cert));
    }
}

/// Evaluation report for one criterion. `exact_budget` of 0 selects the
/// default budget.
///
/// # Safety
/// All handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cx_evaluate(
    design: *const CxDesign,
    mech: *const CxMechanism,
    cert: *const CxCertificate,
    criterion: CxCriterion,
    method: CxMethod,
    reps: usize,
    seed: u64,
    exact_budget: u64,
    out: *mut CxReport,
) -> CxStatus {
    guard(|| {
        let (d, m, c) = (
            &get(design, "design")?.0,
            &get(mech, "mech")?.0,
            &get(cert, "cert")?.0,
        );
        let criterion = match criterion {
            CxCriterion::A => Criterion::A,
            CxCriterion::D => Criterion::D,
            CxCriterion::E => Criterion::E,
            CxCriterion::T => Criterion::T,
        };
        let opts = EvalOptions {
            method: match method {
                CxMethod::Exact => Method::Exact,
                CxMethod::MonteCarlo => Method::MonteCarlo,
            },
            reps,
            seed,
            exact_budget: if exact_budget == 0 {
                DEFAULT_EXACT_BUDGET
            } else {
                exact_budget.into()
            },
        };
        let r = &evaluate(d, m, &[criterion], c, &opts)?[0];
        let report = CxReport {
            phi0: r.phi0,
            phi0_stderr: r.phi0_stderr,
            v_phi: r.v_phi,
            sd_phi: r.sd_phi,
            phi1: r.phi1,
            gap: r.gap,
            e1_tilde: r.e1_tilde,
            ell: r.ell,
            replications: u64::try_from(r.replications).unwrap_or(u64::MAX),
        };
        put(out, report, "out")
    })
}

/// Searches for an exact design with `n` subjects; the mechanism must have
/// `n` subjects. Writes the design and its residual.
///
/// # Safety
/// Handles must be live; both outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn cx_exact_search(
    n: usize,
    cert: *const CxCertificate,
    mech: *const CxMechanism,
    seed: u64,
    restarts: usize,
    iters: usize,
    design_out: *mut *mut CxDesign,
    residual_out: *mut f64,
) -> CxStatus {
    guard(|| {
        if design_out.is_null() || residual_out.is_null() {
            return Err(null("output"));
        }
        let (c, m) = (&get(cert, "cert")?.0, &get(mech, "mech")?.0);
        let opts = SearchOptions {
            seed,
            restarts,
            iters,
        };
        let (design, report) = exact_search(n, c, m, &opts)?;
        put(residual_out, report.residual, "residual_out")?;
        put(design_out, boxed(CxDesign(design)), "design_out")
    })
}

/// Optimality-system residual of an exact design against a certificate.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cx_design_residual(
    design: *const CxDesign,
    cert: *const CxCertificate,
    mech: *const CxMechanism,
    out: *mut f64,
) -> CxStatus {
    guard(|| {
        let (d, c, m) = (
            &get(design, "design")?.0,
            &get(cert, "cert")?.0,
            &get(mech, "mech")?.0,
        );
        let system = build_system(c, m)?;
        let r = system.design_residual(d).ok_or_else(|| {
            Failure(
                CxStatus::Invalid,
                "design uses sequences outside the certificate support".into(),
            )
        })?;
        put(out, r, "out")
    })
}
