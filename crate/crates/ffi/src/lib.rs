//! C interface to `tbh_core`.
//!
//! Every fallible function returns a [`TbhStatus`] and writes results
//! through out-pointers. On failure, [`tbh_last_error_message`] describes
//! the most recent error on the calling thread. Handles are opaque and must
//! be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use tbh_core::diagnostics::page_value;
use tbh_core::quench::{evolve_amplitudes, survival_probability, GridKind, TimeGrid};
use tbh_core::spectrum::{diagonalize, mean_gap_ratio, DiagonalizeOptions, SpectralData};
use tbh_core::{BasisSpec, Error, FockBasis, FockState, HamiltonianMatrix, ModelParams};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TbhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Overflow = 3,
    OutOfRange = 4,
    DimensionTooLarge = 5,
    Numerical = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Fock basis of `N` bosons on `M` sites.
pub struct TbhBasis {
    inner: Arc<FockBasis>,
}

/// Eigenvalues, optionally eigenvectors, of one Hamiltonian.
pub struct TbhSpectrum {
    basis: Arc<FockBasis>,
    data: SpectralData,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("no interior nul"));
}

fn status_of(e: &Error) -> TbhStatus {
    match e {
        Error::Overflow { .. } => TbhStatus::Overflow,
        Error::IndexOutOfRange { .. } | Error::SiteOutOfRange { .. } => TbhStatus::OutOfRange,
        Error::DimensionTooLarge { .. } => TbhStatus::DimensionTooLarge,
        Error::Convergence(_) | Error::InaccurateEigensolve(_) | Error::NotNormalized(_) => TbhStatus::Numerical,
        _ => TbhStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (TbhStatus, String)>) -> TbhStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TbhStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TbhStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (TbhStatus, String)>;
}

impl<T> IntoFfi<T> for tbh_core::Result<T> {
    fn ffi(self) -> Result<T, (TbhStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (TbhStatus, String) {
    (TbhStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (TbhStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], (TbhStatus, String)> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

/// Message for the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tbh_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Number of Fock states of `n_bosons` on `n_sites`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tbh_dimension(n_bosons: usize, n_sites: usize, out: *mut usize) -> TbhStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = BasisSpec::new(n_bosons, n_sites).ffi()?;
        *out = tbh_core::dimension(spec).ffi()?;
        Ok(())
    })
}

/// Builds the basis. Release with [`tbh_basis_free`].
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tbh_basis_new(n_bosons: usize, n_sites: usize, out: *mut *mut TbhBasis) -> TbhStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let basis = FockBasis::new(BasisSpec::new(n_bosons, n_sites).ffi()?).ffi()?;
        *out = Box::into_raw(Box::new(TbhBasis { inner: Arc::new(basis) }));
        Ok(())
    })
}

/// # Safety
/// `basis` must come from [`tbh_basis_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tbh_basis_free(basis: *mut TbhBasis) {
    if !basis.is_null() {
        drop(Box::from_raw(basis));
    }
}

/// # Safety
/// `basis` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tbh_basis_dim(basis: *const TbhBasis, out: *mut usize) -> TbhStatus {
    guard(|| {
        let b = basis.as_ref().ok_or_else(|| null("basis"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = b.inner.dim();
        Ok(())
    })
}

/// Index of the occupation vector `occupations[0..n_sites]`.
///
/// # Safety
/// `basis` must be a live handle, `occupations` must point to `len` values
/// and `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tbh_basis_rank(
    basis: *const TbhBasis,
    occupations: *const u32,
    len: usize,
    out: *mut usize,
) -> TbhStatus {
    guard(|| {
        let b = basis.as_ref().ok_or_else(|| null("basis"))?;
        let occ = slice(occupations, len, "occupations")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = b.inner.rank(occ).ffi()?;
        Ok(())
    })
}

/// Writes the occupations of state `index` into `occupations[0..len]`;
/// `len` must be at least the number of sites.
///
/// # Safety
/// `basis` must be a live handle and `occupations` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn tbh_basis_unrank(
    basis: *const TbhBasis,
    index: usize,
    occupations: *mut u32,
    len: usize,
) -> TbhStatus {
    guard(|| {
        let b = basis.as_ref().ok_or_else(|| null("basis"))?;
        let m = b.inner.n_sites();
        if len < m {
            return Err((TbhStatus::BufferTooSmall, format!("buffer holds {len} values, {m} needed")));
        }
        let state = b.inner.unrank(index).ffi()?;
        slice_mut(occupations, len, "occupations")?[..m].copy_from_slice(state.occupations());
        Ok(())
    })
}

/// Diagonalizes the Hamiltonian with hopping `j`, interaction `u` and tilt
/// `d`. Eigenvectors are kept when `with_vectors` is true, which survival
/// probabilities need. Release with [`tbh_spectrum_free`].
///
/// # Safety
/// `basis` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tbh_spectrum_compute(
    basis: *const TbhBasis,
    j: f64,
    u: f64,
    d: f64,
    with_vectors: bool,
    out: *mut *mut TbhSpectrum,
) -> TbhStatus {
    guard(|| {
        let b = basis.as_ref().ok_or_else(|| null("basis"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let params = ModelParams::new(j, u, d).ffi()?;
        let h = HamiltonianMatrix::build(&b.inner, &params);
        let opts = DiagonalizeOptions { with_vectors, ..Default::default() };
        let data = diagonalize(&h, params, b.inner.spec(), opts).ffi()?;
        *out = Box::into_raw(Box::new(TbhSpectrum { basis: Arc::clone(&b.inner), data }));
        Ok(())
    })
}

/// # Safety
/// `spectrum` must come from [`tbh_spectrum_compute`] and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn tbh_spectrum_free(spectrum: *mut TbhSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// # Safety
/// `spectrum` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tbh_spectrum_len(spectrum: *const TbhSpectrum, out: *mut usize) -> TbhStatus {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(|| null("spectrum"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = s.data.dim();
        Ok(())
    })
}

/// Copies the ascending eigenvalues into `buffer[0..len]`.
///
/// # Safety
/// `spectrum` must be a live handle and `buffer` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn tbh_spectrum_eigenvalues(
    spectrum: *const TbhSpectrum,
    buffer: *mut f64,
    len: usize,
) -> TbhStatus {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(|| null("spectrum"))?;
        let n = s.data.dim();
        if len < n {
            return Err((TbhStatus::BufferTooSmall, format!("buffer holds {len} values, {n} needed")));
        }
        slice_mut(buffer, len, "buffer")?[..n].copy_from_slice(&s.data.eigenvalues);
        Ok(())
    })
}

/// Mean gap ratio of the spectrum after dropping `edge_discard` of the
/// levels at each edge.
///
/// # Safety
/// `spectrum` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tbh_spectrum_gap_ratio(
    spectrum: *const TbhSpectrum,
    edge_discard: f64,
    out: *mut f64,
) -> TbhStatus {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(|| null("spectrum"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = mean_gap_ratio(&s.data.eigenvalues, edge_discard).ffi()?.mean_r;
        Ok(())
    })
}

/// Mean gap ratio of an arbitrary ascending level sequence.
///
/// # Safety
/// `levels` must point to `len` values and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tbh_gap_ratio(levels: *const f64, len: usize, edge_discard: f64, out: *mut f64) -> TbhStatus {
    guard(|| {
        let levels = slice(levels, len, "levels")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = mean_gap_ratio(levels, edge_discard).ffi()?.mean_r;
        Ok(())
    })
}

/// Page value of the single-site entanglement entropy.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tbh_page_value(n_bosons: usize, n_sites: usize, out: *mut f64) -> TbhStatus {
    guard(|| {
        BasisSpec::new(n_bosons, n_sites).ffi()?;
        *out.as_mut().ok_or_else(|| null("out"))? = page_value(n_bosons, n_sites);
        Ok(())
    })
}

/// Survival probability of the Fock state `occupations[0..len]` at the
/// strictly increasing `times[0..n_times]`, written to `out[0..n_times]`.
/// Needs a spectrum computed with eigenvectors.
///
/// # Safety
/// All pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn tbh_survival_probability(
    spectrum: *const TbhSpectrum,
    occupations: *const u32,
    len: usize,
    times: *const f64,
    n_times: usize,
    out: *mut f64,
) -> TbhStatus {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(|| null("spectrum"))?;
        let occ = slice(occupations, len, "occupations")?;
        let grid = TimeGrid::new(slice(times, n_times, "times")?.to_vec(), GridKind::Custom).ffi()?;
        let out = slice_mut(out, n_times, "out")?;
        let c = evolve_amplitudes(&FockState(occ.to_vec()), &s.basis, &s.data).ffi()?;
        out.copy_from_slice(&survival_probability(&c, &s.data.eigenvalues, &grid));
        Ok(())
    })
}
