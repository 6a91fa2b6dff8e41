//! C ABI for `membrane-core`.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free` function. Every fallible function
//! returns an integer status (`MEMBRANE_OK` on success) and writes results
//! through out-pointers; the message of the last failure on the calling
//! thread is available from `membrane_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use membrane_core::extremes::{centering, z_statistic};
use membrane_core::greens::{solve_green_column, FullSpaceGreen, LAMBDA_SQ};
use membrane_core::lattice::{io, Field, GridSpec, Site};
use membrane_core::sampler::{sample_batch, sample_field_stream, SampleBatch};
use membrane_core::scheme::{measure_rate, ManufacturedSolution};
use membrane_core::Error;

pub const MEMBRANE_OK: i32 = 0;
pub const MEMBRANE_ERR_NULL_POINTER: i32 = 1;
pub const MEMBRANE_ERR_INVALID_ARGUMENT: i32 = 2;
pub const MEMBRANE_ERR_OUTSIDE_BOX: i32 = 3;
pub const MEMBRANE_ERR_NOT_CONVERGED: i32 = 4;
pub const MEMBRANE_ERR_PRECONDITION: i32 = 5;
pub const MEMBRANE_ERR_IO: i32 = 6;
pub const MEMBRANE_ERR_QUADRATURE: i32 = 7;
pub const MEMBRANE_ERR_FORMAT: i32 = 8;
pub const MEMBRANE_ERR_OUTSIDE_DOMAIN: i32 = 9;
pub const MEMBRANE_ERR_BUFFER_TOO_SMALL: i32 = 10;
pub const MEMBRANE_ERR_PANIC: i32 = 11;

/// A lattice field on `[0, n]^4`.
pub struct MembraneField {
    inner: Field,
}

/// Per-sample summaries of a batch of membrane samples.
pub struct MembraneBatch {
    inner: SampleBatch,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) => MEMBRANE_ERR_INVALID_ARGUMENT,
        Error::OutsideBox(..) => MEMBRANE_ERR_OUTSIDE_BOX,
        Error::NotConverged { .. } => MEMBRANE_ERR_NOT_CONVERGED,
        Error::Precondition(_) => MEMBRANE_ERR_PRECONDITION,
        Error::Io { .. } | Error::RawIo(_) => MEMBRANE_ERR_IO,
        Error::Quadrature { .. } => MEMBRANE_ERR_QUADRATURE,
        Error::Format(_) | Error::Json(_) => MEMBRANE_ERR_FORMAT,
        Error::OutsideDomain { .. } => MEMBRANE_ERR_OUTSIDE_DOMAIN,
    }
}

enum Fail {
    Core(Error),
    Null(&'static str),
    Buffer(usize),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MEMBRANE_OK
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            code(&e)
        }
        Ok(Err(Fail::Null(name))) => {
            set_error(format!("null pointer passed as `{name}`"));
            MEMBRANE_ERR_NULL_POINTER
        }
        Ok(Err(Fail::Buffer(need))) => {
            set_error(format!("buffer too small: need {need} values"));
            MEMBRANE_ERR_BUFFER_TOO_SMALL
        }
        Err(_) => {
            set_error("internal panic".into());
            MEMBRANE_ERR_PANIC
        }
    }
}

fn nonnull<T>(p: *const T, name: &'static str) -> Result<*const T, Fail> {
    if p.is_null() {
        Err(Fail::Null(name))
    } else {
        Ok(p)
    }
}

unsafe fn read4(p: *const i64, name: &'static str) -> Result<[i64; 4], Fail> {
    let p = nonnull(p, name)?;
    Ok(std::array::from_fn(|i| *p.add(i)))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    let s = CStr::from_ptr(nonnull(p, "path")?)
        .to_str()
        .map_err(|_| Error::InvalidArgument("path is not valid UTF-8".into()))?;
    Ok(Path::new(s))
}

unsafe fn out_handle<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn grid(n: u32) -> Result<GridSpec, Fail> {
    Ok(GridSpec::new(n as usize)?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn membrane_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn membrane_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// `λ² = 8π²`.
#[no_mangle]
pub extern "C" fn membrane_lambda_squared() -> f64 {
    LAMBDA_SQ
}

/// Zero field on `[0, n]^4`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn membrane_field_zeros(n: u32, out: *mut *mut MembraneField) -> i32 {
    guard(|| {
        let g = grid(n)?;
        out_handle(
            out,
            MembraneField {
                inner: Field::zeros(g),
            },
        )
    })
}

/// Releases a field; NULL is ignored.
///
/// # Safety
/// `field` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn membrane_field_free(field: *mut MembraneField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Grid size `n`, or 0 for NULL.
///
/// # Safety
/// `field` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn membrane_field_n(field: *const MembraneField) -> u32 {
    field.as_ref().map_or(0, |f| f.inner.grid().n() as u32)
}

/// Number of stored values `(n+1)^4`, or 0 for NULL.
///
/// # Safety
/// `field` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn membrane_field_len(field: *const MembraneField) -> usize {
    field.as_ref().map_or(0, |f| f.inner.values().len())
}

/// Value at lattice coordinates `coords[4]`; 0 outside the box.
///
/// # Safety
/// `field` must be a live handle, `coords` readable for 4 values and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn membrane_field_get(
    field: *const MembraneField,
    coords: *const i64,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let f = &*nonnull(field, "field")?;
        let c = read4(coords, "coords")?;
        *(nonnull(out, "out")? as *mut f64) = f.inner.get(c);
        Ok(())
    })
}

/// Copies the values in lexicographic site order into `buf[0..len)`.
///
/// # Safety
/// `field` must be a live handle and `buf` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn membrane_field_copy_values(
    field: *const MembraneField,
    buf: *mut f64,
    len: usize,
) -> i32 {
    guard(|| {
        let f = &*nonnull(field, "field")?;
        let vals = f.inner.values();
        if len < vals.len() {
            return Err(Fail::Buffer(vals.len()));
        }
        let buf = nonnull(buf, "buf")? as *mut f64;
        ptr::copy_nonoverlapping(vals.as_ptr(), buf, vals.len());
        Ok(())
    })
}

/// Reads a field file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn membrane_field_load(
    path: *const c_char,
    out: *mut *mut MembraneField,
) -> i32 {
    guard(|| {
        let f = io::load(path_arg(path)?)?;
        out_handle(out, MembraneField { inner: f })
    })
}

/// Writes a field file.
///
/// # Safety
/// `field` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn membrane_field_save(
    field: *const MembraneField,
    path: *const c_char,
) -> i32 {
    guard(|| {
        let f = &*nonnull(field, "field")?;
        Ok(io::save(&f.inner, path_arg(path)?)?)
    })
}

/// Green column `G_h(·, source)` on `[0, n]^4`. `iterations` and
/// `residual` may be NULL.
///
/// # Safety
/// `source` readable for 4 values; `out` writable; optional outputs NULL or
/// writable.
#[no_mangle]
pub unsafe extern "C" fn membrane_green_column(
    n: u32,
    source: *const i64,
    tol: f64,
    out: *mut *mut MembraneField,
    iterations: *mut usize,
    residual: *mut f64,
) -> i32 {
    guard(|| {
        let g = grid(n)?;
        let s = Site(read4(source, "source")?);
        let col = solve_green_column(g, s, tol)?.require_converged()?;
        if !iterations.is_null() {
            *iterations = col.stats.iterations;
        }
        if !residual.is_null() {
            *residual = col.stats.residual;
        }
        out_handle(out, MembraneField { inner: col.values })
    })
}

/// Normalized full-space Green's function `F(x)` at `x[4] ∈ Z^4`.
///
/// # Safety
/// `x` readable for 4 values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn membrane_fullspace_eval(x: *const i64, out: *mut f64) -> i32 {
    guard(|| {
        let x = read4(x, "x")?;
        let v = FullSpaceGreen::shared()?.eval(x)?;
        *(nonnull(out, "out")? as *mut f64) = v;
        Ok(())
    })
}

/// One membrane sample, stream `index` of `seed`.
///
/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn membrane_sample_field(
    n: u32,
    seed: u64,
    index: u64,
    tol: f64,
    out: *mut *mut MembraneField,
) -> i32 {
    guard(|| {
        let (f, _) = sample_field_stream(grid(n)?, seed, index, tol)?;
        out_handle(out, MembraneField { inner: f })
    })
}

/// `count` samples summarized by maximum, argmax and `Z_N`.
///
/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn membrane_batch_new(
    n: u32,
    seed: u64,
    count: usize,
    tol: f64,
    out: *mut *mut MembraneBatch,
) -> i32 {
    guard(|| {
        let b = sample_batch(grid(n)?, seed, count, tol, false)?;
        out_handle(out, MembraneBatch { inner: b })
    })
}

/// Releases a batch; NULL is ignored.
///
/// # Safety
/// `batch` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn membrane_batch_free(batch: *mut MembraneBatch) {
    if !batch.is_null() {
        drop(Box::from_raw(batch));
    }
}

/// Number of samples, or 0 for NULL.
///
/// # Safety
/// `batch` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn membrane_batch_len(batch: *const MembraneBatch) -> usize {
    batch.as_ref().map_or(0, |b| b.inner.samples.len())
}

/// Summary of sample `i`. Any output pointer may be NULL; `argmax` receives
/// 4 coordinates.
///
/// # Safety
/// `batch` must be a live handle; outputs NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn membrane_batch_sample(
    batch: *const MembraneBatch,
    i: usize,
    max: *mut f64,
    argmax: *mut i64,
    z: *mut f64,
) -> i32 {
    guard(|| {
        let b = &*nonnull(batch, "batch")?;
        let s = b.inner.samples.get(i).ok_or_else(|| {
            Error::InvalidArgument(format!("sample {i} out of range {}", b.inner.samples.len()))
        })?;
        if !max.is_null() {
            *max = s.max;
        }
        if !argmax.is_null() {
            ptr::copy_nonoverlapping(s.argmax.as_ptr(), argmax, 4);
        }
        if !z.is_null() {
            *z = s.z;
        }
        Ok(())
    })
}

/// Centering `m_N` of the maximum, `n >= 3`.
///
/// # Safety
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn membrane_centering(n: u32, out: *mut f64) -> i32 {
    guard(|| {
        let v = centering(n as usize)?;
        *(nonnull(out, "out")? as *mut f64) = v;
        Ok(())
    })
}

/// `Z_N` of a field.
///
/// # Safety
/// `field` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn membrane_z_statistic(field: *const MembraneField, out: *mut f64) -> i32 {
    guard(|| {
        let f = &*nonnull(field, "field")?;
        *(nonnull(out, "out")? as *mut f64) = z_statistic(&f.inner);
        Ok(())
    })
}

/// Fitted `W^{2,2}_h` convergence rate of the finite-difference scheme for
/// the manufactured solution `"zero"`, `"sin2"` or `"power:<a>"` on
/// `count >= 3` meshes. Writes NaN when the rate is undefined.
///
/// # Safety
/// `solution` NUL-terminated; `meshes` readable for `count` values; `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn membrane_scheme_rate(
    solution: *const c_char,
    meshes: *const u32,
    count: usize,
    tol: f64,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let name = CStr::from_ptr(nonnull(solution, "solution")?)
            .to_str()
            .map_err(|_| Error::InvalidArgument("solution is not valid UTF-8".into()))?;
        let sol = match name {
            "zero" => ManufacturedSolution::zero(),
            "sin2" => ManufacturedSolution::sin_squared(),
            other => match other.strip_prefix("power:").map(str::parse::<f64>) {
                Some(Ok(a)) => ManufacturedSolution::power(a)?,
                _ => {
                    return Err(
                        Error::InvalidArgument(format!("unknown solution `{other}`")).into(),
                    )
                }
            },
        };
        let ns: Vec<usize> = std::slice::from_raw_parts(nonnull(meshes, "meshes")?, count)
            .iter()
            .map(|&m| m as usize)
            .collect();
        let rep = measure_rate(&sol, &ns, tol)?;
        *(nonnull(out, "out")? as *mut f64) = rep.rate.unwrap_or(f64::NAN);
        Ok(())
    })
}
