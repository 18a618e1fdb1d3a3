#ifndef VIEWSTREAM_H
#define VIEWSTREAM_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum VsStatus {
  VS_STATUS_OK = 0,
  VS_STATUS_NULL_POINTER = 1,
  VS_STATUS_INVALID_PARAMETER = 2,
  VS_STATUS_INVALID_TRANSITION = 3,
  VS_STATUS_INFEASIBLE = 4,
  VS_STATUS_NUMERICAL = 5,
  VS_STATUS_BUFFER_TOO_SMALL = 6,
  VS_STATUS_PANIC = 7,
} VsStatus;

// Opaque optimisation problem.
typedef struct VsProblem VsProblem;

// Opaque stream design.
typedef struct VsSolution VsSolution;

// System parameters for [`vs_problem_new_linear`] and [`vs_problem_new_matrix`].
typedef struct VsProblemParams {
  // Number of view angles `K`.
  size_t num_angles;
  // FoV half-width `a`; the FoV covers `2a + 1` angles.
  size_t fov_half_width;
  // Largest per-frame head movement in angles.
  size_t v_max;
  size_t rtt_frames;
  size_t gop;
  double sigma;
  double d_max;
  // Expected transmitted rate budget `C`.
  double transmission_budget;
  // Storage budget `B`, spread over `duration_secs`.
  double storage_bits;
  double duration_secs;
} VsProblemParams;

// Summary of a simulated session.
typedef struct VsSessionReport {
  size_t frames;
  size_t first_frame;
  double mean_distortion;
  double mean_psnr;
  size_t switch_count;
  double transmitted_rate_mean;
} VsSessionReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the
// next call on the same thread.
const char *vs_last_error_message(void);

// PSNR in dB of a per-pixel MSE on 8-bit samples.
double vs_psnr(double mse);

// Problem whose head motion is the banded linear-kernel chain, optionally
// biased towards `num_hotspots` hotspot angles with multipliers `>= 1`.
//
// # Safety
// `params` and `out` must be valid; the hotspot arrays must hold
// `num_hotspots` entries.
enum VsStatus vs_problem_new_linear(const struct VsProblemParams *params,
                                    const size_t *hotspot_angles,
                                    const double *hotspot_multipliers,
                                    size_t num_hotspots,
                                    struct VsProblem **out);

// Problem with an explicit row-major `K x K` transition matrix.
//
// # Safety
// `params` and `out` must be valid; `matrix` must hold `K * K` values.
enum VsStatus vs_problem_new_matrix(const struct VsProblemParams *params,
                                    const double *matrix,
                                    struct VsProblem **out);

// # Safety
// `problem` must come from a `vs_problem_new_*` call, or be null.
void vs_problem_free(struct VsProblem *problem);

// Copies the stationary angle distribution into `out` (`len >= K`).
//
// # Safety
// `problem` must be valid and `out` must hold `len` values.
enum VsStatus vs_problem_steady_state(const struct VsProblem *problem, double *out, size_t len);

// Best design over `1..=max_streams` streams with default solver settings.
//
// # Safety
// `problem` and `out` must be valid.
enum VsStatus vs_optimize(const struct VsProblem *problem,
                          size_t max_streams,
                          struct VsSolution **out);

// Single uniform-quality stream spending the transmission budget.
//
// # Safety
// `problem` and `out` must be valid.
enum VsStatus vs_static_baseline(const struct VsProblem *problem, struct VsSolution **out);

// # Safety
// `solution` must come from [`vs_optimize`] or [`vs_static_baseline`], or be null.
void vs_solution_free(struct VsSolution *solution);

// Number of streams, or 0 for a null handle.
//
// # Safety
// `solution` must be valid or null.
size_t vs_solution_num_streams(const struct VsSolution *solution);

// Objective value (FoV- and GOP-summed expected distortion); NaN for null.
//
// # Safety
// `solution` must be valid or null.
double vs_solution_expected_distortion(const struct VsSolution *solution);

// # Safety
// `solution` must be valid or null.
double vs_solution_storage_rate(const struct VsSolution *solution);

// # Safety
// `solution` must be valid or null.
double vs_solution_transmission_rate(const struct VsSolution *solution);

// Expected per-frame PSNR of `solution` on `problem`; NaN if either is null.
//
// # Safety
// Both handles must be valid or null.
double vs_solution_expected_psnr(const struct VsSolution *solution,
                                 const struct VsProblem *problem);

// Copies the angle-to-stream mapping into `out` (`len >= K`).
//
// # Safety
// `solution` must be valid and `out` must hold `len` values.
enum VsStatus vs_solution_mapping(const struct VsSolution *solution, size_t *out, size_t len);

// Copies the per-angle distortions of stream `index` into `out` (`len >= K`).
//
// # Safety
// `solution` must be valid and `out` must hold `len` values.
enum VsStatus vs_solution_stream(const struct VsSolution *solution,
                                 size_t index,
                                 double *out,
                                 size_t len);

// Samples a `frames`-long head trace with `seed` and plays it against
// `solution`.
//
// # Safety
// All pointers must be valid.
enum VsStatus vs_simulate(const struct VsProblem *problem,
                          const struct VsSolution *solution,
                          size_t frames,
                          uint64_t seed,
                          bool exclude_warmup,
                          struct VsSessionReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VIEWSTREAM_H */
