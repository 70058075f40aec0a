#ifndef TACTILE_LOOP_H
#define TACTILE_LOOP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum TlStatus {
  TL_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  TL_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  TL_STATUS_INVALID_UTF8 = 2,
  /**
   * The config document could not be parsed or failed validation.
   */
  TL_STATUS_CONFIG = 3,
  /**
   * Reading or writing a file failed.
   */
  TL_STATUS_IO = 4,
  /**
   * A trace file could not be encoded.
   */
  TL_STATUS_FORMAT = 5,
  /**
   * A panic was caught at the boundary.
   */
  TL_STATUS_PANIC = 6,
} TlStatus;

/**
 * Opaque handle to a running session.
 */
typedef struct TlSession TlSession;

/**
 * Snapshot of the session after the most recent tick.
 */
typedef struct TlState {
  /**
   * Simulation time in seconds.
   */
  double t;
  /**
   * Magnet height above the surface in metres.
   */
  double z;
  /**
   * Magnet velocity in metres per second.
   */
  double v;
  /**
   * Last 7-bit sensor code, or -1 before the first sensor frame.
   */
  int32_t raw_code;
  /**
   * Last calibrated proximity in [0, 1].
   */
  double proximity;
  /**
   * Last actuator level, or -1 before the first actuator frame.
   */
  int32_t level;
  /**
   * Last quantized drive in [-1, 1].
   */
  double u_q;
  /**
   * Last coil current in amperes.
   */
  double current;
  /**
   * Number of triggers fired so far.
   */
  uint64_t trigger_count;
} TlState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Create a session from a JSON config document.
 *
 * Pass a null `config_json` to use the built-in defaults. On success the new
 * handle is written to `out` and must be released with [`tl_session_free`].
 *
 * # Safety
 *
 * `config_json` must be null or a NUL-terminated string. `out` must be a
 * valid pointer to writable storage for one handle pointer.
 */
enum TlStatus tl_session_new(const char *config_json, struct TlSession **out);

/**
 * Release a session. Null is ignored.
 *
 * # Safety
 *
 * `session` must be null or a handle from [`tl_session_new`] that has not
 * already been freed.
 */
void tl_session_free(struct TlSession *session);

/**
 * Advance the session by `ticks` physics steps.
 *
 * # Safety
 *
 * `session` must be a live handle from [`tl_session_new`].
 */
enum TlStatus tl_session_step(struct TlSession *session, uint64_t ticks);

/**
 * Override the hand target height in metres; clamped to the valid range.
 *
 * # Safety
 *
 * `session` must be a live handle from [`tl_session_new`].
 */
enum TlStatus tl_session_set_target(struct TlSession *session, double z_target);

/**
 * Discard the sensor calibration and start collecting extrema afresh.
 *
 * # Safety
 *
 * `session` must be a live handle from [`tl_session_new`].
 */
enum TlStatus tl_session_reset_calibration(struct TlSession *session);

/**
 * Copy the current state snapshot into `out`.
 *
 * # Safety
 *
 * `session` must be a live handle from [`tl_session_new`] and `out` a valid
 * pointer to writable [`TlState`] storage.
 */
enum TlStatus tl_session_state(const struct TlSession *session, struct TlState *out);

/**
 * Run a full offline session and write its trace files into `out_dir`.
 *
 * Pass a null `config_json` to use the built-in defaults.
 *
 * # Safety
 *
 * `config_json` must be null or a NUL-terminated string; `out_dir` must be a
 * NUL-terminated string.
 */
enum TlStatus tl_run_and_export(const char *config_json, const char *out_dir);

/**
 * Quantize a drive value to the 26-level actuator grid.
 *
 * Returns the level index (0..=25) and writes the quantized drive to
 * `u_q_out` when it is non-null.
 *
 * # Safety
 *
 * `u_q_out` must be null or a valid pointer to writable `double` storage.
 */
uint8_t tl_quantize26(double u, double *u_q_out);

/**
 * Coil force in newtons at drive `u` and height `z` with default physics.
 */
double tl_coil_force(double u, double z);

/**
 * Message describing the most recent failure on this thread, or null.
 *
 * The returned string is owned by the caller and must be released with
 * [`tl_string_free`].
 */
char *tl_last_error_message(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 *
 * `s` must be null or a pointer from [`tl_last_error_message`] that has not
 * already been freed.
 */
void tl_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TACTILE_LOOP_H */
