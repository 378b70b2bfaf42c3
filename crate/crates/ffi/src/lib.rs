//! C ABI for `opmean`.
//!
//! Matrices and mean descriptions cross the boundary as opaque handles owned
//! by the caller, who releases them with the matching `*_free`. Every entry
//! point returns an [`OmStatus`]; on failure a description is available from
//! [`om_last_error`] on the same thread. Panics never unwind into C.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use opmean::campaign::{run_instance, CheckInstance};
use opmean::inequalities::{kantorovich, CHECK_TOL};
use opmean::multimeans::{evaluate, MultiMeanSpec, SolverConfig};
use opmean::psd::{thompson_distance, SpdMatrix};
use opmean::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    NoConvergence = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

/// Symmetric positive definite matrix.
pub struct OmMatrix(SpdMatrix);

/// Description of an n-variable mean.
pub struct OmMeanSpec(MultiMeanSpec);

/// Outcome of one inequality check.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct OmCheckResult {
    /// 1 when the inequality holds within tolerance.
    pub holds: i32,
    pub margin: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> OmStatus {
    match e {
        Error::NoConvergence { .. }
        | Error::SolverInvariant { .. }
        | Error::CertificationFailure { .. }
        | Error::EigenFailure => OmStatus::NoConvergence,
        _ => OmStatus::InvalidInput,
    }
}

enum Fail {
    Null,
    Lib(Error),
    Status(OmStatus, String),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> OmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OmStatus::Ok,
        Ok(Err(Fail::Null)) => {
            set_error("null pointer argument".into());
            OmStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            OmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(Fail::Null);
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Fail::Status(OmStatus::InvalidInput, "string is not UTF-8".into()))
}

fn json_err(e: serde_json::Error) -> Fail {
    Fail::Lib(Error::from(e))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn om_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a matrix from `dim * dim` row-major entries.
///
/// # Safety
/// `entries` must point to `dim * dim` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn om_matrix_new(
    dim: usize,
    entries: *const f64,
    out: *mut *mut OmMatrix,
) -> OmStatus {
    guard(|| {
        if entries.is_null() || out.is_null() {
            return Err(Fail::Null);
        }
        let n = dim
            .checked_mul(dim)
            .filter(|n| *n > 0)
            .ok_or_else(|| Fail::Status(OmStatus::InvalidInput, format!("bad dimension {dim}")))?;
        let data = std::slice::from_raw_parts(entries, n);
        let m = SpdMatrix::from_matrix(
            DMatrix::from_row_slice(dim, dim, data),
            opmean::psd::DEFAULT_SPD_TOL,
        )?;
        *out = Box::into_raw(Box::new(OmMatrix(m)));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn om_matrix_free(m: *mut OmMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Dimension of `m`, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn om_matrix_dim(m: *const OmMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.0.dim())
}

/// Writes the row-major entries of `m` into `out`, which holds `len` doubles.
///
/// # Safety
/// `m` must be a live handle; `out` valid for `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn om_matrix_entries(
    m: *const OmMatrix,
    out: *mut f64,
    len: usize,
) -> OmStatus {
    guard(|| {
        let m = m.as_ref().ok_or(Fail::Null)?;
        if out.is_null() {
            return Err(Fail::Null);
        }
        let d = m.0.dim();
        if len < d * d {
            return Err(Fail::Status(
                OmStatus::BufferTooSmall,
                format!("need {} doubles, got {len}", d * d),
            ));
        }
        let dst = std::slice::from_raw_parts_mut(out, d * d);
        for (i, row) in m.0.entries().iter().enumerate() {
            dst[i * d..(i + 1) * d].copy_from_slice(row);
        }
        Ok(())
    })
}

/// Parses a mean description such as `{"kind": "karcher", "weights": [0.5, 0.5]}`.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn om_mean_spec_from_json(
    json: *const c_char,
    out: *mut *mut OmMeanSpec,
) -> OmStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail::Null);
        }
        let spec: MultiMeanSpec = serde_json::from_str(str_arg(json)?).map_err(json_err)?;
        spec.validate()?;
        *out = Box::into_raw(Box::new(OmMeanSpec(spec)));
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn om_mean_spec_free(s: *mut OmMeanSpec) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Evaluates `spec` on `count` matrices. `tol` and `max_iters` override the
/// solver defaults when positive. The result is a new handle in `out`.
///
/// # Safety
/// `spec` must be live, `mats` must hold `count` live handles, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn om_mean_evaluate(
    spec: *const OmMeanSpec,
    mats: *const *const OmMatrix,
    count: usize,
    tol: f64,
    max_iters: usize,
    out: *mut *mut OmMatrix,
) -> OmStatus {
    guard(|| {
        let spec = spec.as_ref().ok_or(Fail::Null)?;
        if mats.is_null() || out.is_null() {
            return Err(Fail::Null);
        }
        let handles = std::slice::from_raw_parts(mats, count);
        let inputs = handles
            .iter()
            .map(|h| h.as_ref().map(|m| m.0.clone()).ok_or(Fail::Null))
            .collect::<Result<Vec<_>, _>>()?;
        let mut cfg = SolverConfig::default();
        if tol > 0.0 {
            cfg.dt_tol = tol;
        }
        if max_iters > 0 {
            cfg.max_iters = max_iters;
        }
        let res = evaluate(&spec.0, &inputs, &cfg)?;
        *out = Box::into_raw(Box::new(OmMatrix(res.value)));
        Ok(())
    })
}

/// Thompson distance `‖log A^{-1/2} B A^{-1/2}‖`.
///
/// # Safety
/// `a`, `b` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn om_thompson_distance(
    a: *const OmMatrix,
    b: *const OmMatrix,
    out: *mut f64,
) -> OmStatus {
    guard(|| {
        let (a, b) = (a.as_ref().ok_or(Fail::Null)?, b.as_ref().ok_or(Fail::Null)?);
        let out = out.as_mut().ok_or(Fail::Null)?;
        *out = thompson_distance(&a.0, &b.0)?;
        Ok(())
    })
}

/// Generalized Kantorovich constant `K(h, p)`, `h > 1`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn om_kantorovich(h: f64, p: f64, out: *mut f64) -> OmStatus {
    guard(|| {
        let out = out.as_mut().ok_or(Fail::Null)?;
        *out = kantorovich(h, p)?;
        Ok(())
    })
}

/// Runs one inequality check described as JSON, in the same format as the
/// `instance` field of campaign report lines.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn om_check_instance(
    json: *const c_char,
    out: *mut OmCheckResult,
) -> OmStatus {
    guard(|| {
        let out = out.as_mut().ok_or(Fail::Null)?;
        let inst: CheckInstance = serde_json::from_str(str_arg(json)?).map_err(json_err)?;
        let cfg = SolverConfig {
            certify_karcher: false,
            ..SolverConfig::default()
        };
        let report = run_instance(&inst, &cfg, CHECK_TOL)?;
        *out = OmCheckResult {
            holds: report.holds as i32,
            margin: report.margin,
        };
        Ok(())
    })
}
