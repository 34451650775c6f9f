//! C ABI for the nestdoa library.
//!
//! Conventions:
//! * Geometries are opaque handles created by `nestdoa_geometry_*` and
//!   released with [`nestdoa_geometry_free`].
//! * Functions return `NESTDOA_OK` (0) on success or a nonzero error
//!   code; [`nestdoa_last_error_message`] returns a thread-local,
//!   NUL-terminated description of the most recent failure on the calling
//!   thread.
//! * Snapshot buffers are interleaved re/im `f64` pairs in snapshot-major
//!   order: the sample of sensor `k` at snapshot `i` lives at
//!   `data[2*(i*M + k)]` (real) and `data[2*(i*M + k) + 1]` (imaginary).
//! * DOA buffers are degrees, ascending, of length `P`.
//!
//! The header `include/nestdoa.h` is generated by cbindgen at build time
//! and committed alongside the crate.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nestdoa::covariance::{
    sample_covariance, spatial_smoothing, vectorize_to_coarray, DuplicatePolicy,
};
use nestdoa::geometry::{ArrayGeometry, ArrayKind};
use nestdoa::kai::{ms_kai_nested_music, KaiConfig};
use nestdoa::linalg::{CMat, C64};
use nestdoa::signal::{synthesize, SnapshotMatrix, SourceScenario};
use nestdoa::subspace::{music_estimate, SteeringGrid};
use nestdoa::DoaError;

/// Success.
pub const NESTDOA_OK: i32 = 0;
/// An argument violated a documented precondition.
pub const NESTDOA_ERR_INVALID_ARGUMENT: i32 = 1;
/// The geometry lacks the coarray structure the call requires.
pub const NESTDOA_ERR_UNSUPPORTED_GEOMETRY: i32 = 2;
/// A steering manifold lost full column rank.
pub const NESTDOA_ERR_DEGENERATE_MANIFOLD: i32 = 3;
/// A matrix expected to be positive semidefinite is not.
pub const NESTDOA_ERR_NOT_PSD: i32 = 4;
/// Numerical failure inside a solver.
pub const NESTDOA_ERR_NUMERICAL: i32 = 5;
/// Configuration problem.
pub const NESTDOA_ERR_CONFIG: i32 = 6;
/// I/O failure.
pub const NESTDOA_ERR_IO: i32 = 7;
/// A required pointer was NULL.
pub const NESTDOA_ERR_NULL_POINTER: i32 = 8;
/// An output buffer was too small.
pub const NESTDOA_ERR_BUFFER_TOO_SMALL: i32 = 9;
/// The library panicked; state is unspecified but memory-safe.
pub const NESTDOA_ERR_PANIC: i32 = 10;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message).unwrap_or_else(|_| CString::new("invalid error text").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn code_of(err: &DoaError) -> i32 {
    match err {
        DoaError::InvalidArgument(_) => NESTDOA_ERR_INVALID_ARGUMENT,
        DoaError::UnsupportedGeometry(_) => NESTDOA_ERR_UNSUPPORTED_GEOMETRY,
        DoaError::DegenerateManifold(_) => NESTDOA_ERR_DEGENERATE_MANIFOLD,
        DoaError::NotPsd(_) => NESTDOA_ERR_NOT_PSD,
        DoaError::Numerical(_) => NESTDOA_ERR_NUMERICAL,
        DoaError::Config(_) => NESTDOA_ERR_CONFIG,
        DoaError::Io(_) => NESTDOA_ERR_IO,
    }
}

fn fail(err: DoaError) -> i32 {
    let code = code_of(&err);
    set_error(err.to_string());
    code
}

fn fail_null(what: &str) -> i32 {
    set_error(format!("{what} must not be NULL"));
    NESTDOA_ERR_NULL_POINTER
}

/// Run a fallible body with panic containment.
fn guarded(body: impl FnOnce() -> i32) -> i32 {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(code) => code,
        Err(_) => {
            set_error("internal panic".into());
            NESTDOA_ERR_PANIC
        }
    }
}

/// Opaque array-geometry handle.
pub struct NestdoaGeometry {
    inner: ArrayGeometry,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nestdoa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent error on this thread, or NULL if
/// none occurred. The pointer stays valid until the next failing call on
/// the same thread.
#[no_mangle]
pub extern "C" fn nestdoa_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

fn make_geometry(result: nestdoa::Result<ArrayGeometry>) -> *mut NestdoaGeometry {
    match result {
        Ok(inner) => {
            clear_error();
            Box::into_raw(Box::new(NestdoaGeometry { inner }))
        }
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Two-level nested array with `m1` inner and `m2` outer sensors at base
/// spacing `d1` (fraction of the carrier wavelength). Returns NULL on
/// error.
#[no_mangle]
pub extern "C" fn nestdoa_geometry_nested(m1: usize, m2: usize, d1: f64) -> *mut NestdoaGeometry {
    make_geometry(ArrayGeometry::nested(m1, m2, d1))
}

/// Uniform linear array of `m` sensors at spacing `d`. Returns NULL on
/// error.
#[no_mangle]
pub extern "C" fn nestdoa_geometry_ula(m: usize, d: f64) -> *mut NestdoaGeometry {
    make_geometry(ArrayGeometry::ula(m, d))
}

/// Release a geometry handle. NULL is a no-op.
///
/// # Safety
/// `geometry` must have been returned by a `nestdoa_geometry_*`
/// constructor and not freed before.
#[no_mangle]
pub unsafe extern "C" fn nestdoa_geometry_free(geometry: *mut NestdoaGeometry) {
    if !geometry.is_null() {
        drop(Box::from_raw(geometry));
    }
}

/// Number of physical sensors, or -1 if the handle is NULL.
///
/// # Safety
/// `geometry` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn nestdoa_geometry_sensor_count(geometry: *const NestdoaGeometry) -> i32 {
    if geometry.is_null() {
        fail_null("geometry");
        return -1;
    }
    (*geometry).inner.sensor_count() as i32
}

/// Length of the filled virtual ULA provided by the difference coarray,
/// or -1 if the handle is NULL.
///
/// # Safety
/// `geometry` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn nestdoa_geometry_virtual_aperture(
    geometry: *const NestdoaGeometry,
) -> i32 {
    if geometry.is_null() {
        fail_null("geometry");
        return -1;
    }
    (*geometry).inner.difference_coarray().virtual_aperture as i32
}

/// Copy the sensor positions (units of the base spacing) into `out`.
/// Returns the number of positions written, or -1 on error.
///
/// # Safety
/// `geometry` must be a live handle; `out` must point to at least
/// `capacity` writable `int64_t`s.
#[no_mangle]
pub unsafe extern "C" fn nestdoa_geometry_positions(
    geometry: *const NestdoaGeometry,
    out: *mut i64,
    capacity: usize,
) -> i32 {
    if geometry.is_null() {
        fail_null("geometry");
        return -1;
    }
    if out.is_null() {
        fail_null("out");
        return -1;
    }
    let positions = (*geometry).inner.positions();
    if capacity < positions.len() {
        set_error(format!(
            "buffer holds {capacity} entries but the array has {} sensors",
            positions.len()
        ));
        return -1;
    }
    std::ptr::copy_nonoverlapping(positions.as_ptr(), out, positions.len());
    clear_error();
    positions.len() as i32
}

unsafe fn snapshots_from_raw(
    geometry: &ArrayGeometry,
    data: *const f64,
    n: usize,
) -> nestdoa::Result<SnapshotMatrix> {
    let m = geometry.sensor_count();
    let raw = std::slice::from_raw_parts(data, 2 * m * n);
    let mut matrix = CMat::zeros(m, n);
    for i in 0..n {
        for k in 0..m {
            let base = 2 * (i * m + k);
            matrix[(k, i)] = C64::new(raw[base], raw[base + 1]);
        }
    }
    SnapshotMatrix::new(matrix, geometry.clone())
}

/// Synthesize `n` snapshots of `p` equal-power sources at `doas_deg`
/// (degrees) with per-source SNR `snr_db` over unit noise, writing
/// interleaved re/im pairs to `out` (length `2*M*n`, snapshot-major).
///
/// # Safety
/// `geometry` must be a live handle; `doas_deg` must point to `p`
/// readable doubles; `out` must point to `2*M*n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn nestdoa_synthesize(
    geometry: *const NestdoaGeometry,
    doas_deg: *const f64,
    p: usize,
    snr_db: f64,
    n: usize,
    seed: u64,
    out: *mut f64,
) -> i32 {
    guarded(|| {
        if geometry.is_null() {
            return fail_null("geometry");
        }
        if doas_deg.is_null() {
            return fail_null("doas_deg");
        }
        if out.is_null() {
            return fail_null("out");
        }
        let geom = &(*geometry).inner;
        let doas = std::slice::from_raw_parts(doas_deg, p);
        let scenario = match SourceScenario::equal_power_snr(doas, snr_db) {
            Ok(s) => s,
            Err(e) => return fail(e),
        };
        let y = match synthesize(geom, &scenario, n, seed) {
            Ok(y) => y,
            Err(e) => return fail(e),
        };
        let m = geom.sensor_count();
        let dest = std::slice::from_raw_parts_mut(out, 2 * m * n);
        for i in 0..n {
            for k in 0..m {
                let x = y.data()[(k, i)];
                let base = 2 * (i * m + k);
                dest[base] = x.re;
                dest[base + 1] = x.im;
            }
        }
        clear_error();
        NESTDOA_OK
    })
}

fn write_estimates(angles: &[f64], out: *mut f64, out_complete: *mut i32, complete: bool) {
    unsafe {
        std::ptr::copy_nonoverlapping(angles.as_ptr(), out, angles.len());
        if !out_complete.is_null() {
            *out_complete = complete as i32;
        }
    }
}

/// MUSIC DOA estimation on raw snapshots. A ULA geometry runs plain
/// MUSIC on its sample covariance; a nested geometry runs the coarray
/// pipeline (vectorization and spatial smoothing) first. Writes `p`
/// ascending estimates in degrees to `out_angles_deg`; `out_complete`
/// (optional) receives 1 when every estimate came from a genuine
/// spectrum peak.
///
/// # Safety
/// `geometry` must be a live handle; `data` must point to `2*M*n`
/// readable doubles laid out as documented in the crate root;
/// `out_angles_deg` must point to `p` writable doubles; `out_complete`
/// may be NULL or point to a writable `int32_t`.
#[no_mangle]
pub unsafe extern "C" fn nestdoa_music(
    geometry: *const NestdoaGeometry,
    data: *const f64,
    n: usize,
    p: usize,
    grid_step_deg: f64,
    out_angles_deg: *mut f64,
    out_complete: *mut i32,
) -> i32 {
    guarded(|| {
        if geometry.is_null() {
            return fail_null("geometry");
        }
        if data.is_null() {
            return fail_null("data");
        }
        if out_angles_deg.is_null() {
            return fail_null("out_angles_deg");
        }
        let geom = &(*geometry).inner;
        let y = match snapshots_from_raw(geom, data, n) {
            Ok(y) => y,
            Err(e) => return fail(e),
        };
        let r1 = sample_covariance(&y);
        let estimate = (|| {
            if geom.kind() == ArrayKind::Ula {
                let grid = SteeringGrid::new(geom.positions(), geom.d1(), grid_step_deg)?;
                music_estimate(&r1, p, &grid)
            } else {
                let z = vectorize_to_coarray(&r1, geom, DuplicatePolicy::SelectFirst)?;
                let rt = spatial_smoothing(&z)?;
                let grid = SteeringGrid::virtual_ula(z.m_bar(), geom.d1(), grid_step_deg)?;
                music_estimate(&rt, p, &grid)
            }
        })();
        match estimate {
            Ok(est) => {
                write_estimates(&est.angles_deg, out_angles_deg, out_complete, est.complete);
                clear_error();
                NESTDOA_OK
            }
            Err(e) => fail(e),
        }
    })
}

/// Iteratively refined coarray MUSIC on raw snapshots from a geometry
/// with a filled difference coarray. `iterations` and `mu_increment`
/// follow the library defaults when 0 (3 iterations, increment 0.1).
///
/// # Safety
/// Same contracts as [`nestdoa_music`].
#[no_mangle]
pub unsafe extern "C" fn nestdoa_ms_kai(
    geometry: *const NestdoaGeometry,
    data: *const f64,
    n: usize,
    p: usize,
    iterations: usize,
    mu_increment: f64,
    grid_step_deg: f64,
    out_angles_deg: *mut f64,
    out_complete: *mut i32,
) -> i32 {
    guarded(|| {
        if geometry.is_null() {
            return fail_null("geometry");
        }
        if data.is_null() {
            return fail_null("data");
        }
        if out_angles_deg.is_null() {
            return fail_null("out_angles_deg");
        }
        let geom = &(*geometry).inner;
        let y = match snapshots_from_raw(geom, data, n) {
            Ok(y) => y,
            Err(e) => return fail(e),
        };
        let defaults = KaiConfig::defaults_for(p);
        let config = KaiConfig {
            iterations: if iterations == 0 {
                defaults.iterations
            } else {
                iterations
            },
            mu_increment: if mu_increment == 0.0 {
                defaults.mu_increment
            } else {
                mu_increment
            },
            grid_step_deg,
            duplicate_policy: DuplicatePolicy::SelectFirst,
        };
        match ms_kai_nested_music(&y, p, &config) {
            Ok((est, _trace)) => {
                write_estimates(&est.angles_deg, out_angles_deg, out_complete, est.complete);
                clear_error();
                NESTDOA_OK
            }
            Err(e) => fail(e),
        }
    })
}
