//! C interface. Every function returns an [`SsStatus`]; results go through
//! out-pointers. Handles are opaque and must be released with their `_free`.

use std::cell::RefCell;
use std::ffi::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};

use steadystein::birth_death::{stationary, Centering, LatticeDist};
use steadystein::diffusion::DensityCurve;
use steadystein::metrics::{kolmogorov, pmf_sup_error, wasserstein1};
use steadystein::tables::c2_exact_abs_total;
use steadystein::{Error, Mode, QueueParams};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsStatus {
    Ok = 0,
    InvalidParam = 1,
    Stability = 2,
    Truncation = 3,
    Numeric = 4,
    InvalidPhaseType = 5,
    Precondition = 6,
    NullPointer = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsMode {
    Constant = 0,
    StateDependent = 1,
}

/// Exact stationary law of the customer count.
pub struct SsLattice(LatticeDist);

/// Stationary density of a diffusion approximation.
pub struct SsDensity(DensityCurve);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> SsStatus {
    match e {
        Error::InvalidParam(_) => SsStatus::InvalidParam,
        Error::Stability { .. } => SsStatus::Stability,
        Error::Truncation(_) => SsStatus::Truncation,
        Error::Numeric(_) => SsStatus::Numeric,
        Error::InvalidPhaseType(_) => SsStatus::InvalidPhaseType,
        Error::Precondition(_) => SsStatus::Precondition,
    }
}

/// Run `f`, mapping errors and panics to a status and the thread's last-error message.
fn guard<F: FnOnce() -> Result<(), SsStatus>>(f: F) -> SsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            SsStatus::Panic
        }
    }
}

fn lift<T>(r: steadystein::Result<T>) -> Result<T, SsStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, SsStatus> {
    p.as_mut().ok_or_else(|| {
        set_error("null output pointer".into());
        SsStatus::NullPointer
    })
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, SsStatus> {
    p.as_ref().ok_or_else(|| {
        set_error("null handle".into());
        SsStatus::NullPointer
    })
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ss_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Build the exact law for arrival rate `lambda`, service rate `mu`, `n`
/// servers and abandonment rate `alpha` (0 for Erlang-C).
///
/// # Safety
/// `out_handle` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_lattice_new(
    lambda: f64,
    mu: f64,
    n: u64,
    alpha: f64,
    tail_eps: f64,
    out_handle: *mut *mut SsLattice,
) -> SsStatus {
    guard(|| {
        let o = out(out_handle)?;
        let p = lift(QueueParams::new(lambda, mu, n, alpha))?;
        let l = lift(stationary(&p, tail_eps))?;
        *o = Box::into_raw(Box::new(SsLattice(l)));
        Ok(())
    })
}

/// # Safety
/// `h` must come from `ss_lattice_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ss_lattice_free(h: *mut SsLattice) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Number of retained states, `k_max + 1`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_lattice_len(h: *const SsLattice, len: *mut usize) -> SsStatus {
    guard(|| {
        *out(len)? = handle(h)?.0.probs().len();
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_lattice_pmf(h: *const SsLattice, k: usize, value: *mut f64) -> SsStatus {
    guard(|| {
        *out(value)? = handle(h)?.0.pmf_at(k);
        Ok(())
    })
}

/// `E[X]` of the unscaled count.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_lattice_mean_count(h: *const SsLattice, value: *mut f64) -> SsStatus {
    guard(|| {
        *out(value)? = handle(h)?.0.mean_count();
        Ok(())
    })
}

/// `m`-th moment of the scaled count, centered at the fluid equilibrium.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_lattice_scaled_moment(h: *const SsLattice, m: u32, value: *mut f64) -> SsStatus {
    guard(|| {
        *out(value)? = lift(handle(h)?.0.scaled_moment(m, Centering::Fluid))?;
        Ok(())
    })
}

/// # Safety
/// `out_handle` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_density_new(
    lambda: f64,
    mu: f64,
    n: u64,
    alpha: f64,
    mode: SsMode,
    out_handle: *mut *mut SsDensity,
) -> SsStatus {
    guard(|| {
        let o = out(out_handle)?;
        let p = lift(QueueParams::new(lambda, mu, n, alpha))?;
        let mode = match mode {
            SsMode::Constant => Mode::Constant,
            SsMode::StateDependent => Mode::StateDependent,
        };
        let c = lift(DensityCurve::new(&p, mode))?;
        *o = Box::into_raw(Box::new(SsDensity(c)));
        Ok(())
    })
}

/// # Safety
/// `h` must come from `ss_density_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ss_density_free(h: *mut SsDensity) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_density_pdf(h: *const SsDensity, x: f64, value: *mut f64) -> SsStatus {
    guard(|| {
        *out(value)? = handle(h)?.0.density(x);
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_density_cdf(h: *const SsDensity, x: f64, value: *mut f64) -> SsStatus {
    guard(|| {
        *out(value)? = handle(h)?.0.cdf(x);
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_density_moment(h: *const SsDensity, m: u32, value: *mut f64) -> SsStatus {
    guard(|| {
        *out(value)? = lift(handle(h)?.0.moment(m))?;
        Ok(())
    })
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsMetric {
    Wasserstein = 0,
    Kolmogorov = 1,
    PmfSup = 2,
}

/// Distance between an exact law and a diffusion density built for the same queue.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ss_distance(
    lattice: *const SsLattice,
    density: *const SsDensity,
    metric: SsMetric,
    value: *mut f64,
) -> SsStatus {
    guard(|| {
        let o = out(value)?;
        let (l, c) = (&handle(lattice)?.0, &handle(density)?.0);
        if l.params() != c.params() {
            set_error("lattice and density were built for different queues".into());
            return Err(SsStatus::InvalidParam);
        }
        *o = match metric {
            SsMetric::Wasserstein => wasserstein1(l, c),
            SsMetric::Kolmogorov => kolmogorov(l, c),
            SsMetric::PmfSup => pmf_sup_error(l, c),
        };
        Ok(())
    })
}

/// Exact `E|T~|` for `n` servers, `lambda = n`, and unit-mean two-phase
/// Coxian service with squared coefficient of variation 24.
///
/// # Safety
/// `value` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ss_c2_mean_abs_total(n: u64, alpha: f64, tail_eps: f64, value: *mut f64) -> SsStatus {
    guard(|| {
        *out(value)? = lift(c2_exact_abs_total(n, alpha, tail_eps))?;
        Ok(())
    })
}
