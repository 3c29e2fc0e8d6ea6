#ifndef TSO3_H
#define TSO3_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Bit for each filter in a selection mask.
#define TSO3_MASK_EKF 1

#define TSO3_MASK_UKF 2

#define TSO3_MASK_MEF 4

#define TSO3_MASK_PF 8

typedef enum Tso3Status {
  TSO3_STATUS_OK = 0,
  TSO3_STATUS_NULL_POINTER = 1,
  TSO3_STATUS_INVALID_ARGUMENT = 2,
  TSO3_STATUS_INVALID_CONFIG = 3,
  TSO3_STATUS_DIVERGENCE = 4,
  TSO3_STATUS_IO = 5,
  TSO3_STATUS_NOT_FOUND = 6,
  TSO3_STATUS_PANIC = 7,
} Tso3Status;

typedef enum Tso3Platform {
  TSO3_PLATFORM_UAV = 0,
  TSO3_PLATFORM_SATELLITE = 1,
} Tso3Platform;

typedef enum Tso3Variant {
  TSO3_VARIANT_PROCESS_NOISE = 0,
  TSO3_VARIANT_DETERMINISTIC = 1,
} Tso3Variant;

typedef enum Tso3Filter {
  TSO3_FILTER_EKF = 0,
  TSO3_FILTER_UKF = 1,
  TSO3_FILTER_MEF = 2,
  TSO3_FILTER_PF = 3,
} Tso3Filter;

// Per-sample columns of a filter's error series.
typedef enum Tso3Column {
  TSO3_COLUMN_TIME = 0,
  TSO3_COLUMN_ATTITUDE_ERROR = 1,
  TSO3_COLUMN_RATE_ERROR_X = 2,
  TSO3_COLUMN_RATE_ERROR_Y = 3,
  TSO3_COLUMN_RATE_ERROR_Z = 4,
  TSO3_COLUMN_GROUP_ERROR = 5,
} Tso3Column;

// Opaque property-check report.
typedef struct Tso3CheckReport Tso3CheckReport;

// Opaque experiment configuration.
typedef struct Tso3Config Tso3Config;

// Opaque result of one run.
typedef struct Tso3RunResult Tso3RunResult;

typedef struct Tso3FilterSummary {
  double steady_state_mean_e_r_rad;
  double steady_state_std_e_r_rad;
  double steady_state_mean_e_omega_rad_s;
  double steady_state_std_e_omega_rad_s;
  // Negative when the filter never settles.
  double convergence_time_s;
  double max_group_error;
  bool diverged;
  // Negative when the filter did not diverge.
  double divergence_time_s;
} Tso3FilterSummary;

typedef struct Tso3PfDiagnostics {
  double trace_m;
  double sigma_star;
  double final_sigma;
  double prediction_penalty;
  double horizon_s;
} Tso3PfDiagnostics;

typedef struct Tso3TuningResult {
  double target_variance;
  double best_sigma;
  double best_sigma_star;
  size_t rounds;
  bool settled;
} Tso3TuningResult;

// One property check. `name` stays valid while the report lives.
typedef struct Tso3CheckEntry {
  const char *name;
  bool passed;
  double measured;
  double threshold;
} Tso3CheckEntry;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call on the same thread.
const char *tso3_last_error(void);

// Library name and version, static storage.
const char *tso3_version(void);

// Parses a JSON configuration; unknown fields are rejected.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum Tso3Status tso3_config_from_json(const char *json, struct Tso3Config **out);

// Built-in configuration of one case and variant.
//
// # Safety
// `out` must be a valid pointer.
enum Tso3Status tso3_config_preset(enum Tso3Platform platform,
                                   enum Tso3Variant variant,
                                   struct Tso3Config **out);

// Serializes a configuration; release the string with [`tso3_string_free`].
//
// # Safety
// `config` must be a live handle and `out` a valid pointer.
enum Tso3Status tso3_config_to_json(const struct Tso3Config *config, char **out);

// Shifts every random seed of the configuration by `offset`.
//
// # Safety
// `config` must be a live handle.
enum Tso3Status tso3_config_set_seed_offset(struct Tso3Config *config, uint64_t offset);

// Sets the simulated duration in seconds.
//
// # Safety
// `config` must be a live handle.
enum Tso3Status tso3_config_set_duration(struct Tso3Config *config, double seconds);

// Keeps only the filters whose `TSO3_MASK_*` bits are set.
//
// # Safety
// `config` must be a live handle.
enum Tso3Status tso3_config_select_filters(struct Tso3Config *config, uint32_t mask);

// Sets the PF model-error penalty `Σ = sigma·I`.
//
// # Safety
// `config` must be a live handle.
enum Tso3Status tso3_config_set_pf_correction_penalty(struct Tso3Config *config, double sigma);

// # Safety
// `config` must be null or a handle not yet freed.
void tso3_config_free(struct Tso3Config *config);

// # Safety
// `s` must be null or a string returned by this library.
void tso3_string_free(char *s);

// Simulates one trajectory and runs every selected filter on it. A filter
// that diverges still yields a result; check `diverged` in its summary.
//
// # Safety
// `config` must be a live handle and `out` a valid pointer.
enum Tso3Status tso3_run(const struct Tso3Config *config, struct Tso3RunResult **out);

// Loads a result directory written by [`tso3_result_write`] or the CLI.
//
// # Safety
// `dir` must be a NUL-terminated string and `out` a valid pointer.
enum Tso3Status tso3_result_read(const char *dir, struct Tso3RunResult **out);

// Writes one CSV per filter and a JSON summary into `dir`.
//
// # Safety
// `result` must be a live handle and `dir` a NUL-terminated string.
enum Tso3Status tso3_result_write(const struct Tso3RunResult *result, const char *dir);

// # Safety
// `result` must be a live handle and `out` a valid pointer.
enum Tso3Status tso3_result_summary(const struct Tso3RunResult *result,
                                    enum Tso3Filter filter,
                                    struct Tso3FilterSummary *out);

// Residual statistics of the PF, if it ran to completion.
//
// # Safety
// `result` must be a live handle and `out` a valid pointer.
enum Tso3Status tso3_result_pf_diagnostics(const struct Tso3RunResult *result,
                                           struct Tso3PfDiagnostics *out);

// Number of recorded samples of one filter.
//
// # Safety
// `result` must be a live handle and `out` a valid pointer.
enum Tso3Status tso3_result_series_len(const struct Tso3RunResult *result,
                                       enum Tso3Filter filter,
                                       size_t *out);

// Copies one column into `buffer`, which must hold exactly the series length.
//
// # Safety
// `result` must be a live handle and `buffer` valid for `len` writes.
enum Tso3Status tso3_result_copy_column(const struct Tso3RunResult *result,
                                        enum Tso3Filter filter,
                                        enum Tso3Column column,
                                        double *buffer,
                                        size_t len);

// Amplitude of one rate-error component at `frequency_hz` (nearest bin)
// over the window `[t0, t1]`.
//
// # Safety
// `result` must be a live handle and `out` a valid pointer.
enum Tso3Status tso3_result_spectrum_magnitude(const struct Tso3RunResult *result,
                                               enum Tso3Filter filter,
                                               size_t component,
                                               double t0,
                                               double t1,
                                               double frequency_hz,
                                               double *out);

// # Safety
// `result` must be null or a handle not yet freed.
void tso3_result_free(struct Tso3RunResult *result);

// Runs the PF of `config` alone at penalty `sigma`.
//
// # Safety
// `config` must be a live handle and `out` a valid pointer.
enum Tso3Status tso3_pf_run(const struct Tso3Config *config,
                            double sigma,
                            struct Tso3PfDiagnostics *out);

// Adjusts the PF penalty against the residual-variance target.
//
// # Safety
// `config` must be a live handle and `out` a valid pointer.
enum Tso3Status tso3_tune_pf(const struct Tso3Config *config, struct Tso3TuningResult *out);

// Runs the property checks.
//
// # Safety
// `out` must be a valid pointer.
enum Tso3Status tso3_check_suite(struct Tso3CheckReport **out);

// Number of entries, or 0 for a null handle.
//
// # Safety
// `report` must be null or a live handle.
size_t tso3_check_count(const struct Tso3CheckReport *report);

// # Safety
// `report` must be a live handle and `out` a valid pointer.
enum Tso3Status tso3_check_entry(const struct Tso3CheckReport *report,
                                 size_t index,
                                 struct Tso3CheckEntry *out);

// # Safety
// `report` must be null or a handle not yet freed.
void tso3_check_free(struct Tso3CheckReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSO3_H */
