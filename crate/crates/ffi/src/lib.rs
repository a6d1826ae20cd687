//! C interface to the tnu solvers.
//!
//! Samples live behind an opaque `TnuSample` handle. Every fallible call
//! returns a `TnuStatus`; on failure the message is kept per thread and can
//! be read with `tnu_last_error_message`. Matrices are written row-major into
//! caller-provided buffers whose length is passed alongside.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tnu::asymptotics::asymptotic_cov_scatter;
use tnu::domain::{check_locscat_domain_auto, check_scatter_domain_auto};
use tnu::locscatter::solve_locscatter;
use tnu::oned::solve_oned;
use tnu::scatter::{solve_scatter, ScatterConfig};
use tnu::{EmpiricalSample, Error};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TnuStatus {
    Ok = 0,
    /// Bad arguments, malformed sample or out-of-range `nu`.
    InvalidInput = 1,
    /// The law lies outside the existence domain.
    DomainViolation = 2,
    /// Non-convergence or numerical breakdown.
    Numerical = 3,
    NullPointer = 4,
    BufferTooSmall = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

/// Opaque weighted sample.
pub struct TnuSample {
    inner: EmpiricalSample,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TnuStatus {
    match e.exit_code() {
        2 => TnuStatus::DomainViolation,
        3 => TnuStatus::Numerical,
        _ => TnuStatus::InvalidInput,
    }
}

fn fail(status: TnuStatus, msg: impl Into<String>) -> TnuStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), TnuStatus>) -> TnuStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TnuStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(TnuStatus::Internal, "panic inside tnu"),
    }
}

fn lift<T>(r: tnu::Result<T>) -> Result<T, TnuStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn sample_ref<'a>(s: *const TnuSample) -> Result<&'a EmpiricalSample, TnuStatus> {
    s.as_ref().map(|s| &s.inner).ok_or_else(|| fail(TnuStatus::NullPointer, "sample handle is null"))
}

unsafe fn out_slice<'a>(buf: *mut f64, len: usize, need: usize) -> Result<&'a mut [f64], TnuStatus> {
    if buf.is_null() {
        return Err(fail(TnuStatus::NullPointer, "output buffer is null"));
    }
    if len < need {
        return Err(fail(TnuStatus::BufferTooSmall, format!("output buffer holds {len} values, {need} needed")));
    }
    Ok(std::slice::from_raw_parts_mut(buf, need))
}

unsafe fn write<T>(p: *mut T, v: T) -> Result<(), TnuStatus> {
    if p.is_null() {
        return Err(fail(TnuStatus::NullPointer, "output pointer is null"));
    }
    p.write(v);
    Ok(())
}

fn config(nu: f64, tol: f64, max_iter: usize) -> ScatterConfig {
    let mut cfg = ScatterConfig::new(nu);
    if tol > 0.0 {
        cfg = cfg.with_tol_grad(tol);
    }
    if max_iter > 0 {
        cfg = cfg.with_max_iter(max_iter);
    }
    cfg
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tnu_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length, 0 if none.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn tnu_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match e.borrow().as_ref() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast(), buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Builds a sample from `n` points of dimension `dim` stored row-major in
/// `points`. `weights` may be null for equal weights; otherwise it holds `n`
/// nonnegative values that are normalized.
///
/// # Safety
/// `points` must hold `n * dim` values, `weights` (if non-null) `n` values.
#[no_mangle]
pub unsafe extern "C" fn tnu_sample_new(
    dim: usize,
    n: usize,
    points: *const f64,
    weights: *const f64,
    out: *mut *mut TnuSample,
) -> TnuStatus {
    guard(|| {
        if points.is_null() || out.is_null() {
            return Err(fail(TnuStatus::NullPointer, "points or out is null"));
        }
        let coords = std::slice::from_raw_parts(points, n * dim).to_vec();
        let w = (!weights.is_null()).then(|| std::slice::from_raw_parts(weights, n).to_vec());
        let inner = lift(EmpiricalSample::new(dim, coords, w))?;
        out.write(Box::into_raw(Box::new(TnuSample { inner })));
        Ok(())
    })
}

/// Releases a sample. Null is ignored.
///
/// # Safety
/// `sample` must come from `tnu_sample_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tnu_sample_free(sample: *mut TnuSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Dimension of the sample, 0 for null.
///
/// # Safety
/// `sample` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tnu_sample_dim(sample: *const TnuSample) -> usize {
    sample.as_ref().map_or(0, |s| s.inner.dim())
}

/// Existence check for the scatter functional with constant `a0`
/// (`a0 = nu + d`). Writes membership and the mass margin to the threshold.
///
/// # Safety
/// `sample` must be a live handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tnu_check_scatter_domain(
    sample: *const TnuSample,
    a0: f64,
    member: *mut bool,
    margin: *mut f64,
) -> TnuStatus {
    guard(|| {
        let r = lift(check_scatter_domain_auto(sample_ref(sample)?, a0))?;
        write(member, r.member)?;
        write(margin, r.margin())
    })
}

/// Existence check for the location-scatter functional (affine subspaces).
///
/// # Safety
/// As for `tnu_check_scatter_domain`.
#[no_mangle]
pub unsafe extern "C" fn tnu_check_locscat_domain(
    sample: *const TnuSample,
    a0: f64,
    member: *mut bool,
    margin: *mut f64,
) -> TnuStatus {
    guard(|| {
        let r = lift(check_locscat_domain_auto(sample_ref(sample)?, a0))?;
        write(member, r.member)?;
        write(margin, r.margin())
    })
}

/// Scatter functional `A_nu`. `tol <= 0` and `max_iter == 0` select the
/// defaults. Writes the `d x d` matrix into `a_out`.
///
/// # Safety
/// `a_out` must hold `a_len` values; `iterations` may be null.
#[no_mangle]
pub unsafe extern "C" fn tnu_solve_scatter(
    sample: *const TnuSample,
    nu: f64,
    tol: f64,
    max_iter: usize,
    a_out: *mut f64,
    a_len: usize,
    iterations: *mut usize,
) -> TnuStatus {
    guard(|| {
        let q = sample_ref(sample)?;
        let d = q.dim();
        let out = out_slice(a_out, a_len, d * d)?;
        let r = lift(solve_scatter(q, &config(nu, tol, max_iter)))?;
        out.copy_from_slice(r.a.as_matrix().transpose().as_slice());
        if !iterations.is_null() {
            iterations.write(r.iterations);
        }
        Ok(())
    })
}

/// Location-scatter functional `(mu_nu, Sigma_nu)`, `nu > 1`.
///
/// # Safety
/// `mu_out` must hold `mu_len` values and `sigma_out` `sigma_len` values.
#[no_mangle]
pub unsafe extern "C" fn tnu_solve_locscatter(
    sample: *const TnuSample,
    nu: f64,
    tol: f64,
    max_iter: usize,
    mu_out: *mut f64,
    mu_len: usize,
    sigma_out: *mut f64,
    sigma_len: usize,
) -> TnuStatus {
    guard(|| {
        let p = sample_ref(sample)?;
        let d = p.dim();
        let mu = out_slice(mu_out, mu_len, d)?;
        let sigma = out_slice(sigma_out, sigma_len, d * d)?;
        let e = lift(solve_locscatter(p, &config(nu, tol, max_iter)))?;
        mu.copy_from_slice(&e.mu);
        sigma.copy_from_slice(e.sigma.as_matrix().transpose().as_slice());
        Ok(())
    })
}

/// One-dimensional extended functional. Never fails on domain grounds:
/// a dominant atom yields `(atom, 0)` with `boundary` set.
///
/// # Safety
/// Outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tnu_solve_oned(
    sample: *const TnuSample,
    nu: f64,
    mu: *mut f64,
    sigma: *mut f64,
    boundary: *mut bool,
) -> TnuStatus {
    guard(|| {
        let e = lift(solve_oned(sample_ref(sample)?, nu))?;
        write(mu, e.mu)?;
        write(sigma, e.sigma)?;
        write(boundary, e.boundary)
    })
}

/// Asymptotic covariance of the scatter functional in half-vectorized
/// coordinates (`k = d(d+1)/2`, row-major `k x k`) and its numerical rank.
///
/// # Safety
/// `cov_out` must hold `cov_len` values; `rank` may be null.
#[no_mangle]
pub unsafe extern "C" fn tnu_asymptotic_cov_scatter(
    sample: *const TnuSample,
    nu: f64,
    cov_out: *mut f64,
    cov_len: usize,
    rank: *mut usize,
) -> TnuStatus {
    guard(|| {
        let q = sample_ref(sample)?;
        let k = q.dim() * (q.dim() + 1) / 2;
        let out = out_slice(cov_out, cov_len, k * k)?;
        let s = lift(asymptotic_cov_scatter(q, &ScatterConfig::new(nu)))?;
        out.copy_from_slice(s.s.as_matrix().transpose().as_slice());
        if !rank.is_null() {
            rank.write(s.rank);
        }
        Ok(())
    })
}
