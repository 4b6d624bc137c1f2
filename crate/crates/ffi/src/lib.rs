//! C ABI over `psdc-core`.
//!
//! Every entry point returns a [`PsdcStatus`]; on failure the message is
//! available from [`psdc_last_error`] on the calling thread. Objects are
//! opaque handles released with their `_free` function. Panics never cross
//! the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use psdc_core::gridsim::Grid;
use psdc_core::matrices::{accuracy, dense_eig_oracle, EigenDecomposition, TridiagonalMatrix};
use psdc_core::psdc::{psdc_solve, PsdcConfig};
use psdc_core::psmma::VariantKind;
use psdc_core::report::{run_experiment, ExperimentSpec};
use psdc_core::PsdcError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    NumericalFailure = 3,
    BufferTooSmall = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsdcVariant {
    Bcdd = 0,
    Bdd = 1,
    WRedist = 2,
    NLowrank = 3,
}

/// Symmetric tridiagonal matrix.
pub struct PsdcTridiagonal(TridiagonalMatrix);

/// Eigenvalues (ascending) and column-major eigenvectors.
pub struct PsdcEigen(EigenDecomposition);

/// Solver settings passed by value.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PsdcOptions {
    pub base_size: usize,
    /// 0 selects the size-dependent default.
    pub k_threshold: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub block_size: usize,
    pub variant: PsdcVariant,
    /// Compression tolerance; values <= 0 select the default.
    pub tol: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &PsdcError) -> PsdcStatus {
    match e.exit_code() {
        2 => PsdcStatus::InvalidInput,
        _ => PsdcStatus::NumericalFailure,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (PsdcStatus, String)>) -> PsdcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            PsdcStatus::Ok
        }
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            PsdcStatus::Panic
        }
    }
}

fn core<T>(r: psdc_core::Result<T>) -> Result<T, (PsdcStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (PsdcStatus, String) {
    (PsdcStatus::NullPointer, format!("{what} is null"))
}

/// Message of the last failed call on this thread; empty after success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn psdc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Default options for a problem of order `n`.
#[no_mangle]
pub extern "C" fn psdc_options_default(n: usize) -> PsdcOptions {
    let c = PsdcConfig::for_size(n);
    PsdcOptions {
        base_size: c.base_size,
        k_threshold: c.k_threshold,
        grid_rows: c.grid.p,
        grid_cols: c.grid.q,
        block_size: c.variant.nb,
        variant: PsdcVariant::WRedist,
        tol: c.variant.tol,
    }
}

/// Copies `diag[0..n]` and `offdiag[0..n-1]` into a new matrix.
///
/// # Safety
/// `diag` must point to `n` doubles and `offdiag` to `n - 1` doubles
/// (may be null when `n == 1`); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn psdc_tridiagonal_new(
    n: usize,
    diag: *const f64,
    offdiag: *const f64,
    out: *mut *mut PsdcTridiagonal,
) -> PsdcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if n == 0 {
            return Err((PsdcStatus::InvalidInput, "order must be >= 1".into()));
        }
        if diag.is_null() {
            return Err(null("diag"));
        }
        if n > 1 && offdiag.is_null() {
            return Err(null("offdiag"));
        }
        let d = std::slice::from_raw_parts(diag, n).to_vec();
        let e = if n > 1 { std::slice::from_raw_parts(offdiag, n - 1).to_vec() } else { Vec::new() };
        let t = core(TridiagonalMatrix::new(d, e))?;
        *out = Box::into_raw(Box::new(PsdcTridiagonal(t)));
        Ok(())
    })
}

/// # Safety
/// `t` must come from `psdc_tridiagonal_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn psdc_tridiagonal_free(t: *mut PsdcTridiagonal) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

fn options_to_config(n: usize, o: &PsdcOptions) -> Result<PsdcConfig, (PsdcStatus, String)> {
    let mut c = PsdcConfig::for_size(n);
    c.base_size = o.base_size;
    if o.k_threshold > 0 {
        c.k_threshold = o.k_threshold;
    }
    c.grid = core(Grid::new(o.grid_rows, o.grid_cols))?;
    c.variant.nb = o.block_size;
    c.variant.kind = match o.variant {
        PsdcVariant::Bcdd => VariantKind::Bcdd,
        PsdcVariant::Bdd => VariantKind::Bdd,
        PsdcVariant::WRedist => VariantKind::WRedist,
        PsdcVariant::NLowrank => VariantKind::NLowrank,
    };
    if o.tol > 0.0 {
        c.variant.tol = o.tol;
    }
    core(c.validate())?;
    Ok(c)
}

/// Structured divide-and-conquer eigendecomposition.
///
/// # Safety
/// `t` must be a live handle, `opts` readable or null for defaults, `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn psdc_solve_tridiagonal(
    t: *const PsdcTridiagonal,
    opts: *const PsdcOptions,
    out: *mut *mut PsdcEigen,
) -> PsdcStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("t"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let n = t.0.n();
        let cfg = match opts.as_ref() {
            Some(o) => options_to_config(n, o)?,
            None => PsdcConfig::for_size(n),
        };
        let r = core(psdc_solve(&t.0, &cfg))?;
        *out = Box::into_raw(Box::new(PsdcEigen(r.eig)));
        Ok(())
    })
}

/// Dense reference eigendecomposition (orders up to 4096).
///
/// # Safety
/// `t` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn psdc_dense_oracle(t: *const PsdcTridiagonal, out: *mut *mut PsdcEigen) -> PsdcStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("t"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let e = core(dense_eig_oracle(&t.0))?;
        *out = Box::into_raw(Box::new(PsdcEigen(e)));
        Ok(())
    })
}

/// Order of the decomposition, 0 for a null handle.
///
/// # Safety
/// `e` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn psdc_eigen_order(e: *const PsdcEigen) -> usize {
    e.as_ref().map_or(0, |e| e.0.n())
}

/// Copies the `n` ascending eigenvalues into `buf`.
///
/// # Safety
/// `e` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn psdc_eigen_values(e: *const PsdcEigen, buf: *mut f64, len: usize) -> PsdcStatus {
    guard(|| {
        let e = e.as_ref().ok_or_else(|| null("e"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let v = &e.0.values;
        if len < v.len() {
            return Err((PsdcStatus::BufferTooSmall, format!("need {} doubles, got {len}", v.len())));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// Copies the eigenvectors, column-major (`n * n` doubles), into `buf`.
///
/// # Safety
/// `e` must be a live handle and `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn psdc_eigen_vectors(e: *const PsdcEigen, buf: *mut f64, len: usize) -> PsdcStatus {
    guard(|| {
        let e = e.as_ref().ok_or_else(|| null("e"))?;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let v = e.0.vectors.as_slice();
        if len < v.len() {
            return Err((PsdcStatus::BufferTooSmall, format!("need {} doubles, got {len}", v.len())));
        }
        ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// Orthogonality `max|I - Q Q^T|` and scaled residual of `e` for `t`.
///
/// # Safety
/// Handles must be live; `orthogonality` and `residual` writable.
#[no_mangle]
pub unsafe extern "C" fn psdc_eigen_accuracy(
    t: *const PsdcTridiagonal,
    e: *const PsdcEigen,
    orthogonality: *mut f64,
    residual: *mut f64,
) -> PsdcStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("t"))?;
        let e = e.as_ref().ok_or_else(|| null("e"))?;
        if orthogonality.is_null() || residual.is_null() {
            return Err(null("output"));
        }
        if t.0.n() != e.0.n() {
            return Err((PsdcStatus::InvalidInput, format!("orders {} and {} differ", t.0.n(), e.0.n())));
        }
        let a = core(accuracy(&t.0, &e.0))?;
        *orthogonality = a.orthogonality;
        *residual = a.residual;
        Ok(())
    })
}

/// # Safety
/// `e` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn psdc_eigen_free(e: *mut PsdcEigen) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Runs an experiment described by a JSON spec and returns the JSON report
/// in `out`, to be released with `psdc_string_free`.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn psdc_run_experiment_json(spec_json: *const c_char, out: *mut *mut c_char) -> PsdcStatus {
    guard(|| {
        if spec_json.is_null() {
            return Err(null("spec_json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(spec_json)
            .to_str()
            .map_err(|_| (PsdcStatus::InvalidInput, "spec is not UTF-8".to_string()))?;
        let spec: ExperimentSpec =
            serde_json::from_str(text).map_err(|e| (PsdcStatus::InvalidInput, format!("spec: {e}")))?;
        let report = core(run_experiment(&spec))?;
        let json = core(report.to_json())?;
        *out = CString::new(json).map_err(|e| (PsdcStatus::NumericalFailure, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// JSON of the default experiment spec, released with `psdc_string_free`.
#[no_mangle]
pub extern "C" fn psdc_default_spec_json() -> *mut c_char {
    let s = serde_json::to_string(&ExperimentSpec::default()).unwrap_or_default();
    CString::new(s).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn psdc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
