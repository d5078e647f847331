//! C ABI over `hommax`: opaque handles for a material cell, its effective
//! tensor and its resonance spectrum, with status codes and a per-thread
//! last-error message.

use hommax::cell_problem::{effective_tensor, CellOptions, EffectiveTensor};
use hommax::config::parse_config;
use hommax::gamma_fn::GammaEvaluator;
use hommax::geometry::{validate_cell, MaterialCell, Permittivity, Shape};
use hommax::inclusion_spectrum::{solve_resonances_with, InclusionOperators, SpectrumOptions};
use hommax::Error;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HxStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad configuration, geometry or argument.
    InvalidArgument = 2,
    Solver = 3,
    NotConverged = 4,
    /// Frequency inside a resonance guard.
    PoleGuard = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Unit cell: geometry, resolution and permittivities.
pub struct HxCell(MaterialCell);

/// Effective tensor with its stiff-inclusion diagnostics.
pub struct HxTensor(EffectiveTensor);

/// Inclusion resonances and the `Gamma` evaluator built from them.
pub struct HxSpectrum(GammaEvaluator);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HxStatus {
    match e {
        Error::Config(_) | Error::Geometry(_) | Error::Layout(_) => HxStatus::InvalidArgument,
        Error::NotConverged(_) => HxStatus::NotConverged,
        Error::PoleGuard { .. } => HxStatus::PoleGuard,
        Error::Solver(_) | Error::Asymmetric(_) | Error::Io(_) => HxStatus::Solver,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (HxStatus, String)>) -> HxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HxStatus::Ok,
        Ok(Err((s, m))) => {
            set_error(m);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            HxStatus::Panic
        }
    }
}

fn lib<T>(r: hommax::Result<T>) -> Result<T, (HxStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(name: &str) -> (HxStatus, String) {
    (HxStatus::NullPointer, format!("{name} is null"))
}

fn put<T>(out: *mut *mut T, v: T) {
    // SAFETY: callers check `out` for null before calling.
    unsafe { *out = Box::into_raw(Box::new(v)) };
}

/// Message of the last failed call on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hx_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hx_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Ball inclusion of `radius` at `center` on an `n^3` grid with constant
/// permittivities.
///
/// # Safety
/// `center` must point to 3 readable doubles and `out` to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn hx_cell_ball(
    n: usize,
    center: *const f64,
    radius: f64,
    eps0: f64,
    eps1: f64,
    out: *mut *mut HxCell,
) -> HxStatus {
    guard(|| {
        if center.is_null() {
            return Err(null("center"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let c = std::slice::from_raw_parts(center, 3);
        let cell = MaterialCell::new(
            n,
            Shape::Ball { center: [c[0], c[1], c[2]], radius },
            Permittivity::Constant(eps0),
            Permittivity::Constant(eps1),
        );
        if !(radius > 0.0) {
            return Err((HxStatus::InvalidArgument, format!("radius must be positive, got {radius}")));
        }
        lib(validate_cell(&cell))?;
        put(out, HxCell(cell));
        Ok(())
    })
}

/// Build a cell from the text of a TOML run configuration.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn hx_cell_from_toml(toml: *const c_char, out: *mut *mut HxCell) -> HxStatus {
    guard(|| {
        if toml.is_null() {
            return Err(null("toml"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|_| (HxStatus::InvalidArgument, "configuration is not UTF-8".to_string()))?;
        let cfg = lib(parse_config(text))?;
        put(out, HxCell(lib(cfg.config.cell())?));
        Ok(())
    })
}

/// # Safety
/// `cell` must be null or a handle from an `hx_cell_*` constructor, freed once.
#[no_mangle]
pub unsafe extern "C" fn hx_cell_free(cell: *mut HxCell) {
    if !cell.is_null() {
        drop(Box::from_raw(cell));
    }
}

/// Solve the three corrector problems and the stiff duality check.
///
/// # Safety
/// `cell` must be a live cell handle and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn hx_effective_tensor(cell: *const HxCell, tol: f64, out: *mut *mut HxTensor) -> HxStatus {
    guard(|| {
        let cell = cell.as_ref().ok_or_else(|| null("cell"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if !(tol > 0.0) {
            return Err((HxStatus::InvalidArgument, format!("tolerance must be positive, got {tol}")));
        }
        let t = lib(effective_tensor(&cell.0, &CellOptions { tol, ..Default::default() }))?;
        put(out, HxTensor(t));
        Ok(())
    })
}

/// Copy the symmetric 3x3 tensor, row-major, into `out`.
///
/// # Safety
/// `tensor` must be a live handle and `out` must point to 9 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hx_tensor_get(tensor: *const HxTensor, out: *mut f64) -> HxStatus {
    guard(|| {
        let t = tensor.as_ref().ok_or_else(|| null("tensor"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let o = std::slice::from_raw_parts_mut(out, 9);
        for (i, v) in t.0.a.iter().flatten().enumerate() {
            o[i] = *v;
        }
        Ok(())
    })
}

/// `|A stiff - I|_F`, or NaN when the stiff problem was not solved.
///
/// # Safety
/// `tensor` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hx_tensor_product_residual(tensor: *const HxTensor) -> f64 {
    tensor.as_ref().and_then(|t| t.0.product_residual).unwrap_or(f64::NAN)
}

/// # Safety
/// `tensor` must be null or a handle from [`hx_effective_tensor`], freed once.
#[no_mangle]
pub unsafe extern "C" fn hx_tensor_free(tensor: *mut HxTensor) {
    if !tensor.is_null() {
        drop(Box::from_raw(tensor));
    }
}

/// Lowest `k` inclusion resonances (a degenerate cluster straddling `k`
/// is completed).
///
/// # Safety
/// `cell` must be a live cell handle and `out` a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn hx_spectrum_solve(cell: *const HxCell, k: usize, seed: u64, out: *mut *mut HxSpectrum) -> HxStatus {
    guard(|| {
        let cell = cell.as_ref().ok_or_else(|| null("cell"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ops = lib(InclusionOperators::new(&cell.0))?;
        let opts = SpectrumOptions { k, seed, ..Default::default() };
        let spec = lib(solve_resonances_with(&ops, &opts))?;
        put(out, HxSpectrum(lib(GammaEvaluator::new(spec, ops, opts.zero_mean_tol))?));
        Ok(())
    })
}

/// Number of computed resonances, or 0 for a null handle.
///
/// # Safety
/// `spec` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hx_spectrum_len(spec: *const HxSpectrum) -> usize {
    spec.as_ref().map_or(0, |s| s.0.alphas.len())
}

/// Copy the ascending `alpha_k` into `out`, which holds `cap` doubles.
///
/// # Safety
/// `spec` must be a live handle and `out` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hx_spectrum_alphas(spec: *const HxSpectrum, out: *mut f64, cap: usize) -> HxStatus {
    guard(|| {
        let s = spec.as_ref().ok_or_else(|| null("spec"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let a = &s.0.alphas;
        if cap < a.len() {
            return Err((HxStatus::BufferTooSmall, format!("need {} doubles, got {cap}", a.len())));
        }
        std::slice::from_raw_parts_mut(out, a.len()).copy_from_slice(a);
        Ok(())
    })
}

/// Copy the moments `int r^k`, three per resonance, into `out` (`cap` doubles).
///
/// # Safety
/// `spec` must be a live handle and `out` must point to `cap` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hx_spectrum_moments(spec: *const HxSpectrum, out: *mut f64, cap: usize) -> HxStatus {
    guard(|| {
        let s = spec.as_ref().ok_or_else(|| null("spec"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let m = &s.0.moments;
        if cap < 3 * m.len() {
            return Err((HxStatus::BufferTooSmall, format!("need {} doubles, got {cap}", 3 * m.len())));
        }
        let o = std::slice::from_raw_parts_mut(out, 3 * m.len());
        for (i, v) in m.iter().flatten().enumerate() {
            o[i] = *v;
        }
        Ok(())
    })
}

/// Truncated series `Gamma(omega)`, row-major, into 9 doubles at `out`.
///
/// # Safety
/// `spec` must be a live handle and `out` must point to 9 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hx_spectrum_gamma(spec: *const HxSpectrum, omega: f64, out: *mut f64) -> HxStatus {
    guard(|| {
        let s = spec.as_ref().ok_or_else(|| null("spec"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let g = lib(s.0.gamma_series(omega))?;
        let o = std::slice::from_raw_parts_mut(out, 9);
        for (i, v) in g.iter().flatten().enumerate() {
            o[i] = *v;
        }
        Ok(())
    })
}

/// # Safety
/// `spec` must be null or a handle from [`hx_spectrum_solve`], freed once.
#[no_mangle]
pub unsafe extern "C" fn hx_spectrum_free(spec: *mut HxSpectrum) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}
