/* C interface to the nestdoa direction-of-arrival estimation library. */

#ifndef NESTDOA_H
#define NESTDOA_H

/* Generated by cbindgen from the nestdoa-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Success.
#define NESTDOA_OK 0

// An argument violated a documented precondition.
#define NESTDOA_ERR_INVALID_ARGUMENT 1

// The geometry lacks the coarray structure the call requires.
#define NESTDOA_ERR_UNSUPPORTED_GEOMETRY 2

// A steering manifold lost full column rank.
#define NESTDOA_ERR_DEGENERATE_MANIFOLD 3

// A matrix expected to be positive semidefinite is not.
#define NESTDOA_ERR_NOT_PSD 4

// Numerical failure inside a solver.
#define NESTDOA_ERR_NUMERICAL 5

// Configuration problem.
#define NESTDOA_ERR_CONFIG 6

// I/O failure.
#define NESTDOA_ERR_IO 7

// A required pointer was NULL.
#define NESTDOA_ERR_NULL_POINTER 8

// An output buffer was too small.
#define NESTDOA_ERR_BUFFER_TOO_SMALL 9

// The library panicked; state is unspecified but memory-safe.
#define NESTDOA_ERR_PANIC 10

// Opaque array-geometry handle.
typedef struct NestdoaGeometry NestdoaGeometry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *nestdoa_version(void);

// Message describing the most recent error on this thread, or NULL if
// none occurred. The pointer stays valid until the next failing call on
// the same thread.
const char *nestdoa_last_error_message(void);

// Two-level nested array with `m1` inner and `m2` outer sensors at base
// spacing `d1` (fraction of the carrier wavelength). Returns NULL on
// error.
struct NestdoaGeometry *nestdoa_geometry_nested(size_t m1, size_t m2, double d1);

// Uniform linear array of `m` sensors at spacing `d`. Returns NULL on
// error.
struct NestdoaGeometry *nestdoa_geometry_ula(size_t m, double d);

// Release a geometry handle. NULL is a no-op.
//
// # Safety
// `geometry` must have been returned by a `nestdoa_geometry_*`
// constructor and not freed before.
void nestdoa_geometry_free(struct NestdoaGeometry *geometry);

// Number of physical sensors, or -1 if the handle is NULL.
//
// # Safety
// `geometry` must be a live handle or NULL.
int32_t nestdoa_geometry_sensor_count(const struct NestdoaGeometry *geometry);

// Length of the filled virtual ULA provided by the difference coarray,
// or -1 if the handle is NULL.
//
// # Safety
// `geometry` must be a live handle or NULL.
int32_t nestdoa_geometry_virtual_aperture(const struct NestdoaGeometry *geometry);

// Copy the sensor positions (units of the base spacing) into `out`.
// Returns the number of positions written, or -1 on error.
//
// # Safety
// `geometry` must be a live handle; `out` must point to at least
// `capacity` writable `int64_t`s.
int32_t nestdoa_geometry_positions(const struct NestdoaGeometry *geometry,
                                   int64_t *out,
                                   size_t capacity);

// Synthesize `n` snapshots of `p` equal-power sources at `doas_deg`
// (degrees) with per-source SNR `snr_db` over unit noise, writing
// interleaved re/im pairs to `out` (length `2*M*n`, snapshot-major).
//
// # Safety
// `geometry` must be a live handle; `doas_deg` must point to `p`
// readable doubles; `out` must point to `2*M*n` writable doubles.
int32_t nestdoa_synthesize(const struct NestdoaGeometry *geometry,
                           const double *doas_deg,
                           size_t p,
                           double snr_db,
                           size_t n,
                           uint64_t seed,
                           double *out);

// MUSIC DOA estimation on raw snapshots. A ULA geometry runs plain
// MUSIC on its sample covariance; a nested geometry runs the coarray
// pipeline (vectorization and spatial smoothing) first. Writes `p`
// ascending estimates in degrees to `out_angles_deg`; `out_complete`
// (optional) receives 1 when every estimate came from a genuine
// spectrum peak.
//
// # Safety
// `geometry` must be a live handle; `data` must point to `2*M*n`
// readable doubles laid out as documented in the crate root;
// `out_angles_deg` must point to `p` writable doubles; `out_complete`
// may be NULL or point to a writable `int32_t`.
int32_t nestdoa_music(const struct NestdoaGeometry *geometry,
                      const double *data,
                      size_t n,
                      size_t p,
                      double grid_step_deg,
                      double *out_angles_deg,
                      int32_t *out_complete);

// Iteratively refined coarray MUSIC on raw snapshots from a geometry
// with a filled difference coarray. `iterations` and `mu_increment`
// follow the library defaults when 0 (3 iterations, increment 0.1).
//
// # Safety
// Same contracts as [`nestdoa_music`].
int32_t nestdoa_ms_kai(const struct NestdoaGeometry *geometry,
                       const double *data,
                       size_t n,
                       size_t p,
                       size_t iterations,
                       double mu_increment,
                       double grid_step_deg,
                       double *out_angles_deg,
                       int32_t *out_complete);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NESTDOA_H */
