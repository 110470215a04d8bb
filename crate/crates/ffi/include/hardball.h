#ifndef HARDBALL_H
#define HARDBALL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HbStatus {
  HB_STATUS_OK = 0,
  HB_STATUS_NULL_POINTER = 1,
  HB_STATUS_INVALID_ARGUMENT = 2,
  HB_STATUS_INVALID_PARAMS = 3,
  HB_STATUS_INADMISSIBLE = 4,
  HB_STATUS_ZERO_ENERGY = 5,
  HB_STATUS_SINGULAR_ORBIT = 6,
  HB_STATUS_COLLISION_FLOOD = 7,
  HB_STATUS_SAMPLING_FAILED = 8,
  HB_STATUS_HYPOTHESIS_UNMET = 9,
  HB_STATUS_BUDGET_EXHAUSTED = 10,
  HB_STATUS_INDEX_OUT_OF_RANGE = 11,
  HB_STATUS_INTERNAL = 12,
  HB_STATUS_PANIC = 13,
} HbStatus;

typedef enum HbCertificateKind {
  HB_CERTIFICATE_KIND_EXPANSION = 0,
  HB_CERTIFICATE_KIND_CONTRACTION = 1,
} HbCertificateKind;

/**
 * A simulated orbit segment.
 */
typedef struct HbSegment HbSegment;

/**
 * A normalized phase point.
 */
typedef struct HbState HbState;

/**
 * System parameters: masses, radius, torus dimension.
 */
typedef struct HbSystem HbSystem;

/**
 * One collision of a segment. Ball labels are 0-based.
 */
typedef struct HbEvent {
  double t;
  size_t i;
  size_t j;
  double rel_speed;
  double cos_phi;
} HbEvent;

typedef struct HbCertificate {
  double t;
  double ratio;
  size_t event_index;
} HbCertificate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code.
 */
const char *hb_status_message(enum HbStatus status);

/**
 * Creates a system of `n` balls with the given masses and default tolerances.
 *
 * # Safety
 * `masses` must point to `n` readable doubles; `out` must be writable.
 */
enum HbStatus hb_system_new(size_t nu,
                            double radius,
                            const double *masses,
                            size_t n,
                            struct HbSystem **out);

/**
 * # Safety
 * `sys` must come from [`hb_system_new`] and not be used afterwards.
 */
void hb_system_free(struct HbSystem *sys);

/**
 * Seeded random admissible state with `E = 1/2` and zero momentum.
 *
 * # Safety
 * `sys` must be a live handle; `out` must be writable.
 */
enum HbStatus hb_state_generate(const struct HbSystem *sys, uint64_t seed, struct HbState **out);

/**
 * State from raw positions and velocities (`N·ν` doubles each), wrapped
 * and normalized.
 *
 * # Safety
 * `q` and `v` must point to `len` readable doubles; `out` must be writable.
 */
enum HbStatus hb_state_new(const struct HbSystem *sys,
                           const double *q,
                           const double *v,
                           size_t len,
                           struct HbState **out);

/**
 * Copies positions and velocities into `q` and `v` (`len = N·ν` each).
 *
 * # Safety
 * `q` and `v` must point to `len` writable doubles.
 */
enum HbStatus hb_state_copy(const struct HbState *state, double *q, double *v, size_t len);

/**
 * # Safety
 * `state` must come from this library and not be used afterwards.
 */
void hb_state_free(struct HbState *state);

/**
 * Simulates `collisions` collisions from `state`.
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum HbStatus hb_simulate(const struct HbSystem *sys,
                          const struct HbState *state,
                          size_t collisions,
                          struct HbSegment **out);

/**
 * Number of collisions in a segment (0 for a null handle).
 *
 * # Safety
 * `seg` must be null or a live handle.
 */
size_t hb_segment_event_count(const struct HbSegment *seg);

/**
 * # Safety
 * `seg` must be a live handle; `out` must be writable.
 */
enum HbStatus hb_segment_event(const struct HbSegment *seg, size_t k, struct HbEvent *out);

/**
 * # Safety
 * `seg` must come from [`hb_simulate`] and not be used afterwards.
 */
void hb_segment_free(struct HbSegment *seg);

/**
 * `f(a; m_1 … m_n)`.
 *
 * # Safety
 * `masses` must point to `n` readable doubles; `out` must be writable.
 */
enum HbStatus hb_f_bound(const double *masses, size_t n, double a, double *out);

/**
 * Threshold `G` on relative speeds.
 *
 * # Safety
 * As [`hb_f_bound`].
 */
enum HbStatus hb_g_threshold(const double *masses, size_t n, double *out);

/**
 * `2a·sqrt(M/m)`.
 *
 * # Safety
 * As [`hb_f_bound`].
 */
enum HbStatus hb_lemma310_bound(const double *masses, size_t n, double a, double *out);

/**
 * Searches an expansion or contraction certificate at `state` with target
 * `l` within `budget` collisions (default selection rule).
 *
 * # Safety
 * Handles must be live; `out` must be writable.
 */
enum HbStatus hb_certificate(const struct HbSystem *sys,
                             const struct HbState *state,
                             enum HbCertificateKind kind,
                             double l,
                             size_t budget,
                             struct HbCertificate *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HARDBALL_H */
