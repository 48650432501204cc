//! C ABI over `entrance_core`.
//!
//! Every fallible call returns an [`EntranceStatus`]; on failure the message is available from
//! [`entrance_last_error_message`] on the same thread. Handles are opaque and owned by the caller,
//! who releases them with the matching `*_free`.

use entrance_core::catalog::{self, Params};
use entrance_core::coefficients::CoefficientSet;
use entrance_core::contraction::{one_step_zeta, uniform_certificate};
use entrance_core::density::{fp_solve, Boundary, FPGrid, FpSolution};
use entrance_core::measures::{gaussian_rho_beta, rho_beta, GaussianMeasure, GridMeasure, GridSpec, LyapunovSpec};
use entrance_core::simulator::{push_ensemble, Ensemble, InitialLaw, Scheme, SimConfig};
use entrance_core::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntranceStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Precondition = 4,
    BlowUp = 5,
    Degenerate = 6,
    Numeric = 7,
    Convergence = 8,
    Divergent = 9,
    Unsupported = 10,
    Parse = 11,
    Io = 12,
    Panic = 13,
}

impl From<&Error> for EntranceStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Argument(_) => EntranceStatus::InvalidArgument,
            Error::Config(_) => EntranceStatus::Config,
            Error::Precondition(_) => EntranceStatus::Precondition,
            Error::BlowUp { .. } => EntranceStatus::BlowUp,
            Error::Degenerate(_) => EntranceStatus::Degenerate,
            Error::Numeric(_) => EntranceStatus::Numeric,
            Error::Convergence(_) => EntranceStatus::Convergence,
            Error::Divergent(_) => EntranceStatus::Divergent,
            Error::Unsupported(_) => EntranceStatus::Unsupported,
            Error::Parse { .. } => EntranceStatus::Parse,
            Error::Io(_) => EntranceStatus::Io,
        }
    }
}

/// Simulation scheme selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntranceScheme {
    TruncatedEm = 0,
    TamedEm = 1,
}

/// Fokker–Planck boundary condition.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntranceBoundary {
    Reflecting = 0,
    Absorbing = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EntranceUniformCertificate {
    pub beta: f64,
    pub zeta: f64,
    pub zeta0: f64,
    pub lambda: f64,
    pub c: f64,
}

/// Coefficient set of an SDE.
pub struct EntranceModel {
    inner: CoefficientSet,
}

/// Samples of X_t from a Monte Carlo push.
pub struct EntranceEnsemble {
    inner: Ensemble,
}

/// Fokker–Planck transition density on a uniform grid.
pub struct EntranceDensity {
    inner: FpSolution,
    centers: Vec<f64>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: EntranceStatus, msg: impl Into<String>) -> EntranceStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), EntranceStatus>) -> EntranceStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EntranceStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned());
            fail(EntranceStatus::Panic, format!("panic: {}", msg.unwrap_or_else(|| "unknown".into())))
        }
    }
}

fn core(e: Error) -> EntranceStatus {
    fail((&e).into(), e.to_string())
}

fn nonnull<T>(p: *const T, what: &str) -> Result<(), EntranceStatus> {
    if p.is_null() {
        Err(fail(EntranceStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], EntranceStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    nonnull(p, what)?;
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn string(p: *const c_char, what: &str) -> Result<String, EntranceStatus> {
    nonnull(p, what)?;
    CStr::from_ptr(p).to_str().map(str::to_owned).map_err(|_| fail(EntranceStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or null. Valid until the next call on the thread.
#[no_mangle]
pub extern "C" fn entrance_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Build a catalog example; `keys`/`values` override `n_params` of its parameters (may be null when 0).
///
/// # Safety
/// `name` and each key must be NUL-terminated strings; `keys`/`values` must hold `n_params` entries.
#[no_mangle]
pub unsafe extern "C" fn entrance_model_from_example(
    name: *const c_char,
    keys: *const *const c_char,
    values: *const f64,
    n_params: usize,
    out: *mut *mut EntranceModel,
) -> EntranceStatus {
    guard(|| {
        nonnull(out, "out")?;
        let name = string(name, "name")?;
        let mut p = Params::default();
        if n_params > 0 {
            nonnull(keys, "keys")?;
            let vals = slice(values, n_params, "values")?;
            for (i, v) in vals.iter().enumerate() {
                p = p.with(&string(*keys.add(i), "key")?, *v);
            }
        }
        let inner = catalog::build(&name, &p).map_err(core)?;
        *out = Box::into_raw(Box::new(EntranceModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from `entrance_model_from_example` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn entrance_model_free(m: *mut EntranceModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// State dimension, 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn entrance_model_dim(m: *const EntranceModel) -> usize {
    m.as_ref().map_or(0, |m| m.inner.dim)
}

/// Push `paths` copies of x0 (length `dim`) from s to t.
///
/// # Safety
/// `model` must be a live handle, `x0` must hold `dim` values, `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn entrance_simulate(
    model: *const EntranceModel,
    s: f64,
    x0: *const f64,
    dim: usize,
    t: f64,
    step: f64,
    paths: usize,
    seed: u64,
    scheme: EntranceScheme,
    out: *mut *mut EntranceEnsemble,
) -> EntranceStatus {
    guard(|| {
        nonnull(model, "model")?;
        nonnull(out, "out")?;
        let m = &(*model).inner;
        if dim != m.dim {
            return Err(fail(EntranceStatus::InvalidArgument, format!("x0 has {dim} coordinates, model dimension is {}", m.dim)));
        }
        let x = slice(x0, dim, "x0")?.to_vec();
        let mut cfg = SimConfig::new(step, paths, seed);
        cfg.scheme = match scheme {
            EntranceScheme::TruncatedEm => Scheme::TruncatedEm,
            EntranceScheme::TamedEm => Scheme::TamedEm,
        };
        let inner = push_ensemble(m, s, &InitialLaw::Dirac(x), t, &cfg).map_err(core)?;
        *out = Box::into_raw(Box::new(EntranceEnsemble { inner }));
        Ok(())
    })
}

/// # Safety
/// `e` must be null or a live ensemble handle.
#[no_mangle]
pub unsafe extern "C" fn entrance_ensemble_free(e: *mut EntranceEnsemble) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Number of samples.
///
/// # Safety
/// `e` must be null or a live ensemble handle.
#[no_mangle]
pub unsafe extern "C" fn entrance_ensemble_len(e: *const EntranceEnsemble) -> usize {
    e.as_ref().map_or(0, |e| e.inner.len())
}

/// # Safety
/// `e` must be null or a live ensemble handle.
#[no_mangle]
pub unsafe extern "C" fn entrance_ensemble_dim(e: *const EntranceEnsemble) -> usize {
    e.as_ref().map_or(0, |e| e.inner.dim)
}

/// Row-major samples (len × dim values), owned by the handle.
///
/// # Safety
/// `e` must be null or a live ensemble handle.
#[no_mangle]
pub unsafe extern "C" fn entrance_ensemble_samples(e: *const EntranceEnsemble) -> *const f64 {
    e.as_ref().map_or(ptr::null(), |e| e.inner.samples.as_ptr())
}

/// Sample mean of |X|² and its standard error.
///
/// # Safety
/// `e` must be a live ensemble handle; `mean` and `se` must be writable.
#[no_mangle]
pub unsafe extern "C" fn entrance_ensemble_second_moment(e: *const EntranceEnsemble, mean: *mut f64, se: *mut f64) -> EntranceStatus {
    guard(|| {
        nonnull(e, "ensemble")?;
        nonnull(mean, "mean")?;
        nonnull(se, "se")?;
        let (m, s) = (*e).inner.stat(|x| x.iter().map(|v| v * v).sum());
        *mean = m;
        *se = s;
        Ok(())
    })
}

/// One-step contraction factor ζ for (γ, K, η) at level R and weight β.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn entrance_zeta(gamma: f64, k: f64, eta: f64, big_r: f64, beta: f64, out: *mut f64) -> EntranceStatus {
    guard(|| {
        nonnull(out, "out")?;
        let ok = gamma >= 0.0 && k >= 0.0 && (0.0..=1.0).contains(&eta) && big_r > 0.0 && beta > 0.0;
        if !ok || ![gamma, k, big_r, beta].iter().all(|v| v.is_finite()) {
            return Err(fail(EntranceStatus::InvalidArgument, "need γ ≥ 0, K ≥ 0, η ∈ [0, 1], R > 0, β > 0 (all finite)"));
        }
        *out = one_step_zeta(gamma, k, eta, big_r, beta);
        Ok(())
    })
}

/// Uniform-in-time certificate from Δ-step constants (γ, h, η) and level R.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn entrance_uniform_certificate(
    delta_t: f64,
    gamma: f64,
    h: f64,
    eta: f64,
    big_r: f64,
    out: *mut EntranceUniformCertificate,
) -> EntranceStatus {
    guard(|| {
        nonnull(out, "out")?;
        let u = uniform_certificate(delta_t, gamma, h, eta, big_r).map_err(core)?;
        *out = EntranceUniformCertificate { beta: u.beta, zeta: u.zeta, zeta0: u.zeta0, lambda: u.lambda, c: u.c };
        Ok(())
    })
}

/// ρ_β between N(m1, v1) and N(m2, v2) with V = x².
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn entrance_gaussian_rho_beta(m1: f64, v1: f64, m2: f64, v2: f64, beta: f64, out: *mut f64) -> EntranceStatus {
    guard(|| {
        nonnull(out, "out")?;
        let spec = LyapunovSpec::quadratic(beta).map_err(core)?;
        let g1 = GaussianMeasure::scalar(m1, v1).map_err(core)?;
        let g2 = GaussianMeasure::scalar(m2, v2).map_err(core)?;
        *out = gaussian_rho_beta(&g1, &g2, &spec).map_err(core)?;
        Ok(())
    })
}

/// ρ_β with V = x² between two measures on the same `n`-cell grid of [lo, hi], masses plus out-of-box leak.
///
/// # Safety
/// `a` and `b` must hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn entrance_rho_beta_grid(
    lo: f64,
    hi: f64,
    n: usize,
    a: *const f64,
    leak_a: f64,
    b: *const f64,
    leak_b: f64,
    beta: f64,
    out: *mut f64,
) -> EntranceStatus {
    guard(|| {
        nonnull(out, "out")?;
        let g = GridSpec::line(lo, hi, n).map_err(core)?;
        let ma = GridMeasure::new(g.clone(), slice(a, n, "a")?.to_vec(), leak_a).map_err(core)?;
        let mb = GridMeasure::new(g, slice(b, n, "b")?.to_vec(), leak_b).map_err(core)?;
        *out = rho_beta(&ma, &mb, &LyapunovSpec::quadratic(beta).map_err(core)?).map_err(core)?;
        Ok(())
    })
}

/// Fokker–Planck density of X_t started at x0 at time s, on `cells` cells of [lo, hi] with time step dt.
///
/// # Safety
/// `model` must be a live one-dimensional model handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn entrance_fp_solve(
    model: *const EntranceModel,
    s: f64,
    x0: f64,
    t: f64,
    lo: f64,
    hi: f64,
    cells: usize,
    dt: f64,
    boundary: EntranceBoundary,
    out: *mut *mut EntranceDensity,
) -> EntranceStatus {
    guard(|| {
        nonnull(model, "model")?;
        nonnull(out, "out")?;
        let b = match boundary {
            EntranceBoundary::Reflecting => Boundary::Reflecting,
            EntranceBoundary::Absorbing => Boundary::Absorbing,
        };
        let grid = FPGrid::new(lo, hi, cells, dt, b).map_err(core)?;
        let inner = fp_solve(&(*model).inner, s, x0, t, &grid).map_err(core)?;
        let centers = grid.centers();
        *out = Box::into_raw(Box::new(EntranceDensity { inner, centers }));
        Ok(())
    })
}

/// # Safety
/// `d` must be null or a live density handle.
#[no_mangle]
pub unsafe extern "C" fn entrance_density_free(d: *mut EntranceDensity) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

/// # Safety
/// `d` must be null or a live density handle.
#[no_mangle]
pub unsafe extern "C" fn entrance_density_cells(d: *const EntranceDensity) -> usize {
    d.as_ref().map_or(0, |d| d.centers.len())
}

/// Cell centres, owned by the handle.
///
/// # Safety
/// `d` must be null or a live density handle.
#[no_mangle]
pub unsafe extern "C" fn entrance_density_centers(d: *const EntranceDensity) -> *const f64 {
    d.as_ref().map_or(ptr::null(), |d| d.centers.as_ptr())
}

/// Density values per cell, owned by the handle.
///
/// # Safety
/// `d` must be null or a live density handle.
#[no_mangle]
pub unsafe extern "C" fn entrance_density_values(d: *const EntranceDensity) -> *const f64 {
    d.as_ref().map_or(ptr::null(), |d| d.inner.density.as_ptr())
}

/// Linear interpolation of the density at y (0 outside the grid, NaN for a null handle).
///
/// # Safety
/// `d` must be null or a live density handle.
#[no_mangle]
pub unsafe extern "C" fn entrance_density_at(d: *const EntranceDensity, y: f64) -> f64 {
    d.as_ref().map_or(f64::NAN, |d| d.inner.density_at(y))
}
