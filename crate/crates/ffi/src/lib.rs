//! C ABI over the quantstab library.
//!
//! Conventions: every entry point returns a [`QsStatus`] code; results
//! are exchanged as JSON strings in the same document formats the CLI
//! uses. Strings returned through `char **` out-parameters are owned by
//! this library and must be released with [`qs_string_free`]. Problems
//! are opaque handles created by [`qs_problem_from_json`] and released
//! with [`qs_problem_free`]. A human-readable message for the most
//! recent failure on the current thread is available from
//! [`qs_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::DMatrix;
use serde_json::json;

use quantstab::adversarial::{build_witness, informativity_report, WitnessOutcome};
use quantstab::certificates::{
    maximize_density, solve_fixed_density, verify_certificate, DensityOutcome, SynthesisOutcome,
};
use quantstab::data::{NoiseBound, TrajectoryData, UncertaintyEllipsoid};
use quantstab::error::Error;
use quantstab::io::{certificate_to_json, matrix_from_json, matrix_to_json, Document};
use quantstab::lti::spectral_radius;
use quantstab::sdp::SolveOptions;

/// Status codes returned by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QsStatus {
    /// Success.
    Ok = 0,
    /// Null pointer, malformed UTF-8/JSON, or invalid parameter.
    InvalidArgument = 1,
    /// The synthesis problem is infeasible at the requested density.
    Infeasible = 2,
    /// The SDP solver or a numerical routine failed.
    NumericalFailure = 3,
    /// A requested quantity is undefined for an unstable closed loop.
    Unstable = 4,
    /// Unexpected internal failure (a panic was caught at the boundary).
    Internal = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> QsStatus {
    match err {
        Error::NumericalFailure(_) | Error::UnboundedUncertainty => QsStatus::NumericalFailure,
        Error::UnstableClosedLoop => QsStatus::Unstable,
        _ => QsStatus::InvalidArgument,
    }
}

/// Opaque synthesis problem: trajectory data, input vector, noise
/// bound, and the derived uncertainty ellipsoid.
pub struct QsProblem {
    data: TrajectoryData,
    b: nalgebra::DVector<f64>,
    b_mat: DMatrix<f64>,
    #[allow(dead_code)]
    bound: NoiseBound,
    ellipsoid: UncertaintyEllipsoid,
}

unsafe fn read_utf8<'a>(ptr: *const c_char) -> Result<&'a str, QsStatus> {
    if ptr.is_null() {
        set_error("null string argument");
        return Err(QsStatus::InvalidArgument);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        QsStatus::InvalidArgument
    })
}

fn write_string(out: *mut *mut c_char, text: String) -> QsStatus {
    if out.is_null() {
        set_error("null output pointer");
        return QsStatus::InvalidArgument;
    }
    match CString::new(text) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            QsStatus::Ok
        }
        Err(_) => {
            set_error("output contained an interior NUL byte");
            QsStatus::Internal
        }
    }
}

fn guarded(f: impl FnOnce() -> QsStatus) -> QsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic caught at the FFI boundary");
            QsStatus::Internal
        }
    }
}

/// Parses a problem document (X_minus, U, X_plus, B, noise_bound) and
/// returns an owned handle through `out`.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qs_problem_from_json(
    json: *const c_char,
    out: *mut *mut QsProblem,
) -> QsStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output pointer");
            return QsStatus::InvalidArgument;
        }
        let text = match read_utf8(json) {
            Ok(t) => t,
            Err(code) => return code,
        };
        let parsed: serde_json::Value = match serde_json::from_str(text) {
            Ok(v) => v,
            Err(e) => {
                set_error(&format!("malformed JSON: {e}"));
                return QsStatus::InvalidArgument;
            }
        };
        let build = || -> Result<QsProblem, Error> {
            let doc = Document::from_json(&parsed)?;
            let data = doc
                .trajectory
                .clone()
                .ok_or_else(|| Error::InvalidParameter("document has no trajectory".into()))?;
            let b = doc.input_vector()?;
            let bound = doc
                .noise_bound
                .clone()
                .ok_or_else(|| Error::InvalidParameter("document has no noise bound".into()))?;
            let b_mat = DMatrix::from_column_slice(b.nrows(), 1, b.as_slice());
            let ellipsoid = UncertaintyEllipsoid::build(&data, &b_mat, &bound)?;
            Ok(QsProblem { data, b, b_mat, bound, ellipsoid })
        };
        match build() {
            Ok(p) => {
                *out = Box::into_raw(Box::new(p));
                QsStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Releases a problem handle. Accepts null.
///
/// # Safety
/// `problem` must have come from [`qs_problem_from_json`] and must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qs_problem_free(problem: *mut QsProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

unsafe fn problem_ref<'a>(problem: *const QsProblem) -> Result<&'a QsProblem, QsStatus> {
    if problem.is_null() {
        set_error("null problem handle");
        return Err(QsStatus::InvalidArgument);
    }
    Ok(&*problem)
}

/// Synthesizes a gain at sector radius `delta`; writes the certificate
/// JSON (with a sampled verification block) to `json_out`.
///
/// # Safety
/// `problem` must be a live handle and `json_out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qs_stabilize(
    problem: *const QsProblem,
    delta: f64,
    json_out: *mut *mut c_char,
) -> QsStatus {
    guarded(|| {
        let p = match problem_ref(problem) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match solve_fixed_density(&p.ellipsoid, &p.b_mat, delta, &SolveOptions::default()) {
            Ok(SynthesisOutcome::Feasible(cert)) => {
                let verification =
                    verify_certificate(&p.ellipsoid, &p.b, &cert, 20, 0, false).ok();
                write_string(
                    json_out,
                    certificate_to_json(&cert, verification.as_ref()).to_string(),
                )
            }
            Ok(SynthesisOutcome::Infeasible { .. }) => {
                set_error(&format!("infeasible at delta {delta}"));
                QsStatus::Infeasible
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Maximizes the sector radius and writes the result JSON (delta_star,
/// rho_star, certificate) to `json_out`.
///
/// # Safety
/// `problem` must be a live handle and `json_out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qs_coarsest(
    problem: *const QsProblem,
    json_out: *mut *mut c_char,
) -> QsStatus {
    guarded(|| {
        let p = match problem_ref(problem) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match maximize_density(&p.ellipsoid, &p.b_mat, &SolveOptions::default()) {
            Ok(DensityOutcome::Feasible(result)) => {
                let value = json!({
                    "delta_star": result.delta_star,
                    "delta_sq": result.delta_sq,
                    "rho_star": result.rho_star,
                    "certificate": certificate_to_json(&result.certificate, None),
                });
                write_string(json_out, value.to_string())
            }
            Ok(DensityOutcome::Infeasible { .. }) => {
                set_error("no stabilizing quantized feedback exists for this data");
                QsStatus::Infeasible
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Writes the informativity report (rank, Slater, boundedness, witness
/// spectral radius) to `json_out`.
///
/// # Safety
/// `problem` must be a live handle and `json_out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qs_check_data(
    problem: *const QsProblem,
    json_out: *mut *mut c_char,
) -> QsStatus {
    guarded(|| {
        let p = match problem_ref(problem) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match informativity_report(&p.data, &p.ellipsoid) {
            Ok(report) => match serde_json::to_string(&report) {
                Ok(text) => write_string(json_out, text),
                Err(e) => {
                    set_error(&e.to_string());
                    QsStatus::Internal
                }
            },
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Builds the rank-deficiency witness at scale `k_scale` and writes it
/// to `json_out`; the document records `full_rank: true` when no
/// witness exists.
///
/// # Safety
/// `problem` must be a live handle and `json_out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn qs_witness(
    problem: *const QsProblem,
    k_scale: f64,
    json_out: *mut *mut c_char,
) -> QsStatus {
    guarded(|| {
        let p = match problem_ref(problem) {
            Ok(p) => p,
            Err(code) => return code,
        };
        match build_witness(&p.ellipsoid, &p.data, k_scale) {
            Ok(WitnessOutcome::FullRank) => {
                write_string(json_out, json!({"full_rank": true}).to_string())
            }
            Ok(WitnessOutcome::Witness(w)) => {
                let a_bar = w.matrix();
                let value = json!({
                    "full_rank": false,
                    "rank": w.rank,
                    "witness": matrix_to_json(&a_bar),
                    "spectral_radius": spectral_radius(&a_bar),
                    "membership": p.ellipsoid.membership(&a_bar),
                });
                write_string(json_out, value.to_string())
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// H-infinity norm of K (zI - A - BK)^{-1} B from a JSON document with
/// keys A, B, K.
///
/// # Safety
/// `json` must be a NUL-terminated string and `norm_out` a valid
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn qs_hinf_norm(json: *const c_char, norm_out: *mut f64) -> QsStatus {
    guarded(|| {
        if norm_out.is_null() {
            set_error("null output pointer");
            return QsStatus::InvalidArgument;
        }
        let text = match read_utf8(json) {
            Ok(t) => t,
            Err(code) => return code,
        };
        let run = || -> Result<f64, Error> {
            let v: serde_json::Value = serde_json::from_str(text)?;
            let obj = v
                .as_object()
                .ok_or_else(|| Error::InvalidParameter("expected a JSON object".into()))?;
            let a = matrix_from_json(
                obj.get("A").ok_or_else(|| Error::InvalidParameter("missing A".into()))?,
                "A",
            )?;
            let b = quantstab::io::vector_from_json(
                obj.get("B").ok_or_else(|| Error::InvalidParameter("missing B".into()))?,
                "B",
            )?;
            let k = matrix_from_json(
                obj.get("K").ok_or_else(|| Error::InvalidParameter("missing K".into()))?,
                "K",
            )?;
            quantstab::certificates::hinf_norm_bisection(&a, &b, &k)
        };
        match run() {
            Ok(norm) => {
                *norm_out = norm;
                QsStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Releases a string returned by this library. Accepts null.
///
/// # Safety
/// `s` must have been returned through a `char **` out-parameter of
/// this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the most recent failure on the calling thread, or null.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn qs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| match &*e.borrow() {
        Some(c) => c.as_ptr(),
        None => std::ptr::null(),
    })
}
