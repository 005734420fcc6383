#ifndef BLOCHGEOM_H
#define BLOCHGEOM_H

#include <stddef.h>
#include <stdint.h>

typedef enum BgStatus {
  BG_STATUS_OK = 0,
  BG_STATUS_NULL_POINTER = 1,
  BG_STATUS_INVALID_UTF8 = 2,
  // Malformed, incomplete or inconsistent configuration.
  BG_STATUS_CONFIG = 3,
  BG_STATUS_PHYSICS = 4,
  BG_STATUS_COMPUTATION = 5,
  BG_STATUS_IO = 6,
  BG_STATUS_USAGE = 7,
  BG_STATUS_PANIC = 8,
} BgStatus;

typedef enum BgMethod {
  BG_METHOD_KUBO = 0,
  BG_METHOD_CORRECTED = 1,
} BgMethod;

typedef enum BgCommand {
  BG_COMMAND_BANDS = 0,
  BG_COMMAND_CURVATURE = 1,
  BG_COMMAND_DELTA_VERIFY = 2,
  BG_COMMAND_FREE_PARTICLE = 3,
  BG_COMMAND_ADIABATIC = 4,
  BG_COMMAND_VERIFY_ALL = 5,
} BgCommand;

// A parsed configuration together with its Bloch model.
typedef struct BgModel BgModel;

// Artifacts and verdict of one command run.
typedef struct BgReport BgReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success. Owned by the library.
const char *bg_last_error_message(void);

// Parses a JSON configuration and builds its model.
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum BgStatus bg_model_from_config_json(const char *json, struct BgModel **out);

// `model` must be null or a handle from `bg_model_from_config_json` not yet freed.
void bg_model_free(struct BgModel *model);

// `model` must be a live handle.
size_t bg_model_dimension(const struct BgModel *model);

// `model` must be a live handle.
size_t bg_model_basis_size(const struct BgModel *model);

// Lowest `n_bands` energies at `k`, ascending, written to `energies`.
// `k` must hold `k_len` doubles and `energies` room for `n_bands` doubles.
enum BgStatus bg_model_solve(const struct BgModel *model,
                             const double *k,
                             size_t k_len,
                             size_t n_bands,
                             double *energies);

// Sum-over-states Berry curvature (x, y, z) of `band` at `k` using `n_bands` bands.
// `k` must hold `k_len` doubles and `omega` room for 3 doubles.
enum BgStatus bg_model_curvature(const struct BgModel *model,
                                 const double *k,
                                 size_t k_len,
                                 size_t band,
                                 size_t n_bands,
                                 enum BgMethod method,
                                 double *omega);

// Runs a command on a JSON configuration. A null `config_json` is accepted by
// `BG_COMMAND_VERIFY_ALL` and selects the bundled configurations.
// `config_json` must be null or NUL-terminated; `out` must be a valid pointer.
enum BgStatus bg_run_command(enum BgCommand command,
                             const char *config_json,
                             uint64_t seed,
                             struct BgReport **out);

// `report` must be null or a handle from `bg_run_command` not yet freed.
void bg_report_free(struct BgReport *report);

// 1 when every asserted check passed, 0 otherwise or for a null handle.
// `report` must be null or a live handle.
int32_t bg_report_pass(const struct BgReport *report);

// `report` must be null or a live handle.
size_t bg_report_artifact_count(const struct BgReport *report);

// File name of artifact `i`, or null when out of range. Valid until the report is freed.
// `report` must be null or a live handle.
const char *bg_report_artifact_name(const struct BgReport *report, size_t i);

// Text of artifact `i`, or null when out of range. Valid until the report is freed.
// `report` must be null or a live handle.
const char *bg_report_artifact_contents(const struct BgReport *report, size_t i);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLOCHGEOM_H */
