#ifndef CHAINLOC_H
#define CHAINLOC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum ClStatus {
  CL_STATUS_OK = 0,
  CL_STATUS_NULL_POINTER = 1,
  CL_STATUS_INVALID_ARGUMENT = 2,
  CL_STATUS_CONFIG = 3,
  CL_STATUS_DEGENERATE = 4,
  CL_STATUS_TIMESTEP_ABORTED = 5,
  CL_STATUS_IO = 6,
  CL_STATUS_JSON = 7,
  CL_STATUS_BUFFER_TOO_SMALL = 8,
  // The simulation has no steps left.
  CL_STATUS_FINISHED = 9,
  CL_STATUS_PANIC = 10,
  CL_STATUS_BAD_MAGIC = 21,
  CL_STATUS_UNSUPPORTED_VERSION = 22,
  CL_STATUS_CRC_MISMATCH = 23,
  CL_STATUS_TRUNCATED = 24,
  CL_STATUS_INVALID_PAYLOAD = 25,
  CL_STATUS_OUT_OF_ORDER = 26,
  CL_STATUS_DUPLICATE = 27,
} ClStatus;

// Opaque in-process chain simulation.
typedef struct ClSimulation ClSimulation;

// Latency model coefficients; see `cl_latency_params_default`.
typedef struct ClLatencyParams {
  double clock_hz;
  double cycles_predict_per_particle;
  double cycles_update_per_particle_per_meas;
  double cycles_resample_per_particle;
  double cycles_fixed_per_panel;
  double link_bits_per_s;
  double link_fixed_s;
} ClLatencyParams;

// One particle as carried in a chain frame.
typedef struct ClParticle {
  double px;
  double py;
  double vx;
  double vy;
  // Linear weight.
  double weight;
} ClParticle;

// One step's output.
typedef struct ClEstimate {
  uint32_t time_index;
  double x;
  double y;
  double vx;
  double vy;
  double true_x;
  double true_y;
  // Anchors whose existence probability exceeds the detection threshold.
  uint32_t n_detected;
} ClEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty if none. The
// pointer stays valid until the next failing call on this thread.
const char *cl_last_error_message(void);

// Marcum Q-function of order one.
//
// # Safety
// `out` must be null or point to writable memory for one double.
enum ClStatus cl_marcum_q1(double a, double b, double *out);

// The illustrative default profile.
struct ClLatencyParams cl_latency_params_default(void);

// Compute seconds of one panel for one step.
//
// # Safety
// `params` and `out` must be null or valid.
enum ClStatus cl_panel_latency(size_t n_particles,
                               size_t n_meas,
                               const struct ClLatencyParams *params,
                               double *out);

// Seconds to ship one frame of `n_particles` over one hop.
//
// # Safety
// `params` and `out` must be null or valid.
enum ClStatus cl_link_latency(size_t n_particles,
                              const struct ClLatencyParams *params,
                              double *out);

// Critical-path seconds of one step through `n_panels` panels, where
// `n_meas[k]` is the measurement count at panel `k + 1`.
//
// # Safety
// `n_meas` must point to `n_panels` values; `params` and `out` must be
// null or valid.
enum ClStatus cl_chain_latency(size_t n_panels,
                               const size_t *n_meas,
                               size_t n_particles,
                               const struct ClLatencyParams *params,
                               double *out);

// Encoded size in bytes of a frame with `n_particles` particles.
size_t cl_frame_len(size_t n_particles);

// Encodes particles into a chain frame. Weights are normalized on the
// way. On `BufferTooSmall`, `written` holds the required size.
//
// # Safety
// `particles` must point to `n` values, `buf` to `cap` writable bytes,
// `written` to one `size_t`.
enum ClStatus cl_encode_frame(uint16_t panel_id,
                              uint32_t time_index,
                              const struct ClParticle *particles,
                              size_t n,
                              uint8_t *buf,
                              size_t cap,
                              size_t *written);

// Decodes and validates a chain frame. On `BufferTooSmall`, `n_out`
// holds the particle count.
//
// # Safety
// `buf` must point to `len` bytes and `out` to `cap` particles; the other
// pointers must be null or valid.
enum ClStatus cl_decode_frame(const uint8_t *buf,
                              size_t len,
                              struct ClParticle *out,
                              size_t cap,
                              size_t *n_out,
                              uint16_t *panel_id,
                              uint32_t *time_index);

// Creates a simulation of the scenario in `scenario_json` (null or empty
// for the default scene) for run `run` of `seed`.
//
// # Safety
// `scenario_json` must be null or a NUL-terminated string; `out` must be
// valid.
enum ClStatus cl_simulation_new(const char *scenario_json,
                                uint64_t seed,
                                uint16_t run,
                                struct ClSimulation **out);

// Number of panels in the chain, 0 for a null handle.
//
// # Safety
// `sim` must be null or a live handle.
size_t cl_simulation_n_panels(const struct ClSimulation *sim);

// Number of time steps, 0 for a null handle.
//
// # Safety
// `sim` must be null or a live handle.
size_t cl_simulation_n_steps(const struct ClSimulation *sim);

// Advances one time step. Returns `Finished` once every step has run.
// After any other error the simulation cannot continue.
//
// # Safety
// `sim` must be a live handle and `out` valid.
enum ClStatus cl_simulation_step(struct ClSimulation *sim, struct ClEstimate *out);

// Releases a simulation. Null is ignored.
//
// # Safety
// `sim` must be null or a handle from `cl_simulation_new` not yet freed.
void cl_simulation_free(struct ClSimulation *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHAINLOC_H */
