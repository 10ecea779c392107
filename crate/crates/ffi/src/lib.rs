//! C interface to `mvrr`.
//!
//! Designs and fits are opaque heap handles released with their `_free`
//! function. Matrices cross the boundary as row-major `double` buffers.
//! Every fallible call returns an [`MvrrStatus`]; on failure the message is
//! available from [`mvrr_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mvrr::glm::{self, logistic};
use mvrr::linalg;
use mvrr::{
    compute_weights, FitResult, Matrix, MultiViewDesign, MvrrError, PenaltyWeights, Preprocess, ResponseData,
    SolverOptions,
};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MvrrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidData = 3,
    Dimension = 4,
    Numerical = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MvrrFamily {
    Gaussian = 0,
    Binary = 1,
}

/// Solver settings; obtain defaults from [`mvrr_options_default`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MvrrOptions {
    pub rho0: f64,
    pub rho_growth: f64,
    pub rho_max: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub ridge_lambda2: f64,
    pub rank_tol: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MvrrFitInfo {
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_r_primal: f64,
    pub final_r_dual: f64,
    pub objective: f64,
    pub p: usize,
    pub q: usize,
    pub k: usize,
}

/// Opaque design handle.
pub struct MvrrDesign {
    inner: MultiViewDesign,
}

/// Opaque fit handle.
pub struct MvrrFit {
    inner: FitResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &MvrrError) -> MvrrStatus {
    match e {
        MvrrError::InvalidArgument(_) => MvrrStatus::InvalidArgument,
        MvrrError::Numerical(_) => MvrrStatus::Numerical,
        MvrrError::AtLambda { source, .. } => status_of(source),
        MvrrError::Dimension(_) | MvrrError::RowMismatch { .. } | MvrrError::EmptyBlock(_) => MvrrStatus::Dimension,
        _ => MvrrStatus::InvalidData,
    }
}

enum Failure {
    Null(&'static str),
    Lib(MvrrError),
}

impl From<MvrrError> for Failure {
    fn from(e: MvrrError) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MvrrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            MvrrStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(&format!("null pointer: {what}"));
            MvrrStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            MvrrStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &'static str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::Null(what))
    } else {
        Ok(())
    }
}

unsafe fn read_row_major(data: *const f64, rows: usize, cols: usize, what: &'static str) -> Result<Matrix, Failure> {
    non_null(data, what)?;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| MvrrError::InvalidArgument(format!("{what}: size overflow")))?;
    let slice = std::slice::from_raw_parts(data, len);
    Ok(Matrix::from_row_slice(rows, cols, slice))
}

unsafe fn write_row_major(m: &Matrix, out: *mut f64, len: usize, what: &'static str) -> Result<(), Failure> {
    non_null(out, what)?;
    if len != m.nrows() * m.ncols() {
        return Err(MvrrError::Dimension(format!(
            "{what}: buffer holds {len} values, need {}",
            m.nrows() * m.ncols()
        ))
        .into());
    }
    let dst = std::slice::from_raw_parts_mut(out, len);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            dst[i * m.ncols() + j] = m[(i, j)];
        }
    }
    Ok(())
}

unsafe fn response(
    y: *const f64,
    n: usize,
    q: usize,
    mask: *const u8,
    family: MvrrFamily,
) -> Result<ResponseData, Failure> {
    let values = read_row_major(y, n, q, "y")?;
    let mask = if mask.is_null() {
        None
    } else {
        let m = std::slice::from_raw_parts(mask, n * q);
        Some(mask_from_bytes(n, q, m))
    };
    let family = match family {
        MvrrFamily::Gaussian => mvrr::Family::Gaussian,
        MvrrFamily::Binary => mvrr::Family::Binary,
    };
    Ok(ResponseData::new(values, family, mask)?)
}

fn mask_from_bytes(n: usize, q: usize, m: &[u8]) -> mvrr::Mask {
    mvrr::Mask::from_fn(n, q, |i, j| m[i * q + j] != 0)
}

unsafe fn weights_for(design: &MultiViewDesign, q: usize, weights: *const f64) -> Result<PenaltyWeights, Failure> {
    if weights.is_null() {
        Ok(compute_weights(design, q)?)
    } else {
        let w = std::slice::from_raw_parts(weights, design.k()).to_vec();
        Ok(PenaltyWeights::custom(w)?)
    }
}

impl From<MvrrOptions> for SolverOptions {
    fn from(o: MvrrOptions) -> Self {
        SolverOptions {
            rho0: o.rho0,
            rho_growth: o.rho_growth,
            rho_max: o.rho_max,
            tol: o.tol,
            max_iter: o.max_iter,
            ridge_lambda2: o.ridge_lambda2,
            rank_tol: o.rank_tol,
            record_trace: false,
        }
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mvrr_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failure on this thread (empty after success).
/// The pointer stays valid until the next call into the library on this
/// thread.
#[no_mangle]
pub extern "C" fn mvrr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn mvrr_options_default() -> MvrrOptions {
    let d = SolverOptions::default();
    MvrrOptions {
        rho0: d.rho0,
        rho_growth: d.rho_growth,
        rho_max: d.rho_max,
        tol: d.tol,
        max_iter: d.max_iter,
        ridge_lambda2: d.ridge_lambda2,
        rank_tol: d.rank_tol,
    }
}

/// Builds a design from a row-major `n x p` matrix whose columns form `k`
/// consecutive views of sizes `view_sizes[0..k]`.
///
/// # Safety
/// `x` must point to `n * p` doubles, `view_sizes` to `k` values and `out`
/// to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn mvrr_design_new(
    x: *const f64,
    n: usize,
    p: usize,
    view_sizes: *const usize,
    k: usize,
    center: bool,
    scale: bool,
    out: *mut *mut MvrrDesign,
) -> MvrrStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(view_sizes, "view_sizes")?;
        let raw = read_row_major(x, n, p, "x")?;
        let sizes = std::slice::from_raw_parts(view_sizes, k).to_vec();
        let inner = MultiViewDesign::from_full(raw, sizes, Preprocess { center, scale })?;
        *out = Box::into_raw(Box::new(MvrrDesign { inner }));
        Ok(())
    })
}

/// # Safety
/// `design` must come from [`mvrr_design_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mvrr_design_free(design: *mut MvrrDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

/// Writes the `k` default penalty weights for a response with `q` columns.
///
/// # Safety
/// `out` must hold `k` doubles.
#[no_mangle]
pub unsafe extern "C" fn mvrr_design_weights(design: *const MvrrDesign, q: usize, out: *mut f64) -> MvrrStatus {
    guard(|| {
        non_null(design, "design")?;
        non_null(out, "out")?;
        let d = &(*design).inner;
        let w = compute_weights(d, q)?;
        std::slice::from_raw_parts_mut(out, d.k()).copy_from_slice(&w.w);
        Ok(())
    })
}

/// Smallest penalty level at which the fit is the intercept-only model.
/// `mask` (row-major `n x q`, nonzero = observed) and `weights` (length `k`)
/// may be null.
///
/// # Safety
/// Buffers must have the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mvrr_lambda_max(
    design: *const MvrrDesign,
    y: *const f64,
    q: usize,
    mask: *const u8,
    family: MvrrFamily,
    weights: *const f64,
    out: *mut f64,
) -> MvrrStatus {
    guard(|| {
        non_null(design, "design")?;
        non_null(out, "out")?;
        let d = &(*design).inner;
        let resp = response(y, d.n_rows(), q, mask, family)?;
        let w = weights_for(d, q, weights)?;
        *out = glm::lambda_max_response(d, &resp, &w)?;
        Ok(())
    })
}

/// Fits at penalty level `lambda`. `mask`, `weights` and `options` may be
/// null (complete data, default weights, default options).
///
/// # Safety
/// Buffers must have the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mvrr_fit(
    design: *const MvrrDesign,
    y: *const f64,
    q: usize,
    mask: *const u8,
    family: MvrrFamily,
    lambda: f64,
    weights: *const f64,
    options: *const MvrrOptions,
    out: *mut *mut MvrrFit,
) -> MvrrStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(design, "design")?;
        let d = &(*design).inner;
        let resp = response(y, d.n_rows(), q, mask, family)?;
        let w = weights_for(d, q, weights)?;
        let opts: SolverOptions = if options.is_null() {
            SolverOptions::default()
        } else {
            (*options).into()
        };
        let inner = glm::fit(d, &resp, lambda, &w, &opts, None)?;
        *out = Box::into_raw(Box::new(MvrrFit { inner }));
        Ok(())
    })
}

/// # Safety
/// `fit` must come from [`mvrr_fit`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn mvrr_fit_free(fit: *mut MvrrFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// # Safety
/// `fit` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mvrr_fit_info(fit: *const MvrrFit, out: *mut MvrrFitInfo) -> MvrrStatus {
    guard(|| {
        non_null(fit, "fit")?;
        non_null(out, "out")?;
        let f = &(*fit).inner;
        *out = MvrrFitInfo {
            lambda: f.lambda,
            iterations: f.iterations,
            converged: f.converged,
            final_r_primal: f.final_r_primal,
            final_r_dual: f.final_r_dual,
            objective: f.objective,
            p: f.coefficients.b.nrows(),
            q: f.coefficients.q(),
            k: f.coefficients.k(),
        };
        Ok(())
    })
}

/// Copies the stacked `p x q` coefficient matrix (row-major) into `out`,
/// which must hold exactly `len = p * q` doubles.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mvrr_fit_coefficients(fit: *const MvrrFit, out: *mut f64, len: usize) -> MvrrStatus {
    guard(|| {
        non_null(fit, "fit")?;
        write_row_major(&(*fit).inner.coefficients.b, out, len, "coefficients")
    })
}

/// Copies the length-`q` intercept into `out`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mvrr_fit_intercept(fit: *const MvrrFit, out: *mut f64, len: usize) -> MvrrStatus {
    guard(|| {
        non_null(fit, "fit")?;
        let mu = &(*fit).inner.coefficients.intercept;
        let row = Matrix::from_row_slice(1, mu.len(), mu.as_slice());
        write_row_major(&row, out, len, "intercept")
    })
}

/// Predicts for `m` new raw rows (row-major `m x p`), replaying the
/// design's centering and scaling. Writes the linear predictor, or
/// probabilities when `probabilities` is set, into the `m x q` buffer `out`.
///
/// # Safety
/// Buffers must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn mvrr_fit_predict(
    fit: *const MvrrFit,
    design: *const MvrrDesign,
    x_new: *const f64,
    m: usize,
    probabilities: bool,
    out: *mut f64,
    len: usize,
) -> MvrrStatus {
    guard(|| {
        non_null(fit, "fit")?;
        non_null(design, "design")?;
        let d = &(*design).inner;
        let raw = read_row_major(x_new, m, d.p(), "x_new")?;
        let xt = d.transform_full(&raw)?;
        let mut theta = (*fit).inner.coefficients.linear_predictor(&xt)?;
        if probabilities {
            theta.apply(|v| *v = logistic(*v));
        }
        write_row_major(&theta, out, len, "predictions")
    })
}

/// Singular value soft-thresholding of a row-major `rows x cols` matrix at
/// level `tau`; the result goes to `out` (same size).
///
/// # Safety
/// `m` and `out` must hold `rows * cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn mvrr_svt(m: *const f64, rows: usize, cols: usize, tau: f64, out: *mut f64) -> MvrrStatus {
    guard(|| {
        let a = read_row_major(m, rows, cols, "m")?;
        let (s, _) = linalg::svt(&a, tau)?;
        write_row_major(&s, out, rows * cols, "out")
    })
}
