//! C ABI over the openxxz library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_solve`
//! and released by the matching `*_free`. Every fallible call returns an
//! `OxxzStatus`; the message of the most recent failure on the calling
//! thread is available from `oxxz_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;
use openxxz::bethe::{self, BetheSolution};
use openxxz::correlators::{self, CorrelatorOptions, Method};
use openxxz::ed_oracle;
use openxxz::{Error, ModelParams};

/// Return codes. Values 2..8 match the error codes of the CLI error record.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OxxzStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParam = 2,
    DegenerateRegion = 3,
    Singular = 4,
    NoConvergence = 5,
    Consistency = 6,
    Config = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Method selector for `oxxz_qgen`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OxxzMethod {
    EdBrute = 0,
    FiniteSum = 1,
    MultipleIntegral = 2,
    ThermoLimit = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OxxzComplex {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for OxxzComplex {
    fn from(z: Complex64) -> Self {
        OxxzComplex { re: z.re, im: z.im }
    }
}

impl From<OxxzComplex> for Complex64 {
    fn from(z: OxxzComplex) -> Self {
        Complex64::new(z.re, z.im)
    }
}

/// Opaque model parameters.
pub struct OxxzParams {
    inner: ModelParams,
}

/// Opaque Bethe solution (roots and holes).
pub struct OxxzBethe {
    inner: BetheSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> OxxzStatus {
    match e {
        Error::InvalidParam { .. } => OxxzStatus::InvalidParam,
        Error::DegenerateRegion(_) => OxxzStatus::DegenerateRegion,
        Error::Singular(_) => OxxzStatus::Singular,
        Error::NoConvergence { .. } => OxxzStatus::NoConvergence,
        Error::Consistency(_) => OxxzStatus::Consistency,
        Error::Config(_) => OxxzStatus::Config,
        Error::Io(_) => OxxzStatus::Io,
    }
}

/// Runs `f`, mapping library errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), (OxxzStatus, String)>) -> OxxzStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OxxzStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("panic inside openxxz".into());
            OxxzStatus::Panic
        }
    }
}

fn lib<T>(r: openxxz::Result<T>) -> Result<T, (OxxzStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (OxxzStatus, String) {
    (OxxzStatus::NullPointer, format!("{what} is null"))
}

/// Copies `src` into a caller buffer of capacity `cap`; `len_out` receives the
/// required length in any case.
unsafe fn copy_out(
    src: &[Complex64],
    buf: *mut OxxzComplex,
    cap: usize,
    len_out: *mut usize,
) -> Result<(), (OxxzStatus, String)> {
    if !len_out.is_null() {
        *len_out = src.len();
    }
    if src.len() > cap {
        return Err((
            OxxzStatus::BufferTooSmall,
            format!("buffer holds {cap}, need {}", src.len()),
        ));
    }
    if src.is_empty() {
        return Ok(());
    }
    if buf.is_null() {
        return Err(null("buffer"));
    }
    for (k, z) in src.iter().enumerate() {
        *buf.add(k) = (*z).into();
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn oxxz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message of the last failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn oxxz_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Homogeneous chain of even length `l`, η = iγ.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn oxxz_params_new(
    l: usize,
    gamma: f64,
    xi_plus: OxxzComplex,
    xi_minus: OxxzComplex,
    out: *mut *mut OxxzParams,
) -> OxxzStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = lib(ModelParams::homogeneous(l, gamma, xi_plus.into(), xi_minus.into()).validate())?;
        *out = Box::into_raw(Box::new(OxxzParams { inner: p }));
        Ok(())
    })
}

/// Sets `n` inhomogeneities (n must equal L).
///
/// # Safety
/// `p` must come from `oxxz_params_new`; `s` must point to `n` values.
#[no_mangle]
pub unsafe extern "C" fn oxxz_params_set_inhom(
    p: *mut OxxzParams,
    s: *const OxxzComplex,
    n: usize,
) -> OxxzStatus {
    guard(|| {
        let p = p.as_mut().ok_or_else(|| null("params"))?;
        if s.is_null() {
            return Err(null("inhomogeneities"));
        }
        let v: Vec<Complex64> = std::slice::from_raw_parts(s, n).iter().map(|z| (*z).into()).collect();
        let q = lib(p.inner.clone().with_inhom(v).validate())?;
        p.inner = q;
        Ok(())
    })
}

/// # Safety
/// `p` must come from `oxxz_params_new` or be NULL; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn oxxz_params_free(p: *mut OxxzParams) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Bethe roots and hole-type solutions of the lowest zero-magnetization state.
///
/// # Safety
/// `p` must be a live params handle, `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn oxxz_bethe_solve(p: *const OxxzParams, out: *mut *mut OxxzBethe) -> OxxzStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("params"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let sol = lib(bethe::find_all_solutions(&p.inner, None))?;
        *out = Box::into_raw(Box::new(OxxzBethe { inner: sol }));
        Ok(())
    })
}

/// Copies the L/2 roots; `len_out` receives the count.
///
/// # Safety
/// `b` must be a live solution handle; `buf` must hold `cap` values.
#[no_mangle]
pub unsafe extern "C" fn oxxz_bethe_roots(
    b: *const OxxzBethe,
    buf: *mut OxxzComplex,
    cap: usize,
    len_out: *mut usize,
) -> OxxzStatus {
    guard(|| {
        let b = b.as_ref().ok_or_else(|| null("solution"))?;
        copy_out(&b.inner.roots, buf, cap, len_out)
    })
}

/// Copies the L+1 holes; `len_out` receives the count.
///
/// # Safety
/// As for `oxxz_bethe_roots`.
#[no_mangle]
pub unsafe extern "C" fn oxxz_bethe_holes(
    b: *const OxxzBethe,
    buf: *mut OxxzComplex,
    cap: usize,
    len_out: *mut usize,
) -> OxxzStatus {
    guard(|| {
        let b = b.as_ref().ok_or_else(|| null("solution"))?;
        copy_out(&b.inner.holes, buf, cap, len_out)
    })
}

/// Largest Bethe-equation residual of the solution.
///
/// # Safety
/// `b` must be a live solution handle, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn oxxz_bethe_residual(b: *const OxxzBethe, out: *mut f64) -> OxxzStatus {
    guard(|| {
        let b = b.as_ref().ok_or_else(|| null("solution"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = b.inner.max_residual;
        Ok(())
    })
}

/// Energy of the Bethe state.
///
/// # Safety
/// Live handles and a valid `out`.
#[no_mangle]
pub unsafe extern "C" fn oxxz_bethe_energy(
    b: *const OxxzBethe,
    p: *const OxxzParams,
    out: *mut f64,
) -> OxxzStatus {
    guard(|| {
        let b = b.as_ref().ok_or_else(|| null("solution"))?;
        let p = p.as_ref().ok_or_else(|| null("params"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = lib(bethe::ground_energy_from_roots(&b.inner, &p.inner))?;
        Ok(())
    })
}

/// # Safety
/// `b` must come from `oxxz_bethe_solve` or be NULL; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn oxxz_bethe_free(b: *mut OxxzBethe) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// Lowest S^z = 0 energy by exact diagonalization.
///
/// # Safety
/// Live params handle and a valid `out`.
#[no_mangle]
pub unsafe extern "C" fn oxxz_ed_ground_energy(p: *const OxxzParams, out: *mut f64) -> OxxzStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("params"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = lib(ed_oracle::lowest_zero_mag_state(&p.inner))?.energy;
        Ok(())
    })
}

/// ⟨Q_m(φ)⟩ with default solver options.
///
/// # Safety
/// Live params handle and a valid `out`.
#[no_mangle]
pub unsafe extern "C" fn oxxz_qgen(
    p: *const OxxzParams,
    method: OxxzMethod,
    m: usize,
    phi: f64,
    out: *mut OxxzComplex,
) -> OxxzStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("params"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let method = match method {
            OxxzMethod::EdBrute => Method::EdBrute,
            OxxzMethod::FiniteSum => Method::FiniteSum,
            OxxzMethod::MultipleIntegral => Method::MultipleIntegral,
            OxxzMethod::ThermoLimit => Method::ThermoLimit,
        };
        let r = lib(correlators::generating_function(
            method,
            m,
            phi,
            &p.inner,
            &CorrelatorOptions::default(),
        ))?;
        *out = r.value.into();
        Ok(())
    })
}
