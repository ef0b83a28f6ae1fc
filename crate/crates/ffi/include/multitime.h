#ifndef MULTITIME_H
#define MULTITIME_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum MtStatus {
  MT_STATUS_OK = 0,
  MT_STATUS_NULL_POINTER = 1,
  MT_STATUS_INVALID_UTF8 = 2,
  MT_STATUS_DIMENSION_MISMATCH = 3,
  MT_STATUS_UNKNOWN_LABEL = 4,
  MT_STATUS_CAP_EXCEEDED = 5,
  MT_STATUS_INVALID_ARGUMENT = 6,
  MT_STATUS_NULL_OUTCOME = 7,
  MT_STATUS_NOT_ORTHOGONAL = 8,
  MT_STATUS_CONFIG = 9,
  MT_STATUS_IO = 10,
  MT_STATUS_PANIC = 11,
  // An experiment run stopped on an error outside the other categories.
  MT_STATUS_RUN_FAILED = 12,
} MtStatus;

// Correction families for `mt_bff_optimize`.
typedef enum MtFamily {
  MT_FAMILY_IDENTITY = 0,
  // One layer of single-site gates.
  MT_FAMILY_LOCAL = 1,
  // Brickwork of two-site gates; the depth argument applies.
  MT_FAMILY_BRICKWORK = 2,
  // Arbitrary unitary on all final sites.
  MT_FAMILY_FULL = 3,
} MtFamily;

// Opaque dynamics model.
typedef struct MtModel MtModel;

// Opaque pure process (Choi state plus metadata).
typedef struct MtProcess MtProcess;

typedef struct MtProcessInfo {
  size_t k;
  size_t d_s;
  size_t d_e;
  size_t d_b;
  // Complex entries of the Choi vector.
  size_t total_dim;
} MtProcessInfo;

typedef struct MtBffResult {
  double zeta;
  double identity_fidelity;
  size_t iterations;
  bool converged;
} MtBffResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *mt_version(void);

// Message of the last failed call on this thread, or NULL after a
// successful call. Valid until the next call into the library on this thread.
const char *mt_last_error_message(void);

// Sets the global amplitude cap (complex entries per dense object).
enum MtStatus mt_set_amplitude_cap(size_t cap);

// Builds a model from its JSON description, the same object accepted in
// experiment configs (e.g. `{"id": "haar", "d_s": 2, "d_e": 8}`). `steps`
// is the number of step unitaries to prepare; `seed` fixes random models.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum MtStatus mt_model_from_json(const char *json,
                                 size_t steps,
                                 uint64_t seed,
                                 struct MtModel **out);

// # Safety
// `model` must come from `mt_model_from_json` and not be freed already.
void mt_model_free(struct MtModel *model);

// Process tensor of the first `k` steps of a model.
//
// # Safety
// `model` must be a live handle and `out` a valid pointer.
enum MtStatus mt_model_process(const struct MtModel *model, size_t k, struct MtProcess **out);

// Process tensor of arbitrary dynamics on a chain of `n_sites` qudits of
// dimension `d` with the system at `s_site`. `initial` holds d^n complex
// amplitudes; `unitaries` holds `k` consecutive d^n × d^n matrices.
//
// # Safety
// The arrays must hold the stated number of interleaved complex entries.
enum MtStatus mt_process_from_unitaries(size_t n_sites,
                                        size_t d,
                                        size_t s_site,
                                        const double *initial,
                                        const double *unitaries,
                                        size_t k,
                                        struct MtProcess **out);

// # Safety
// `process` must be a live handle or NULL.
void mt_process_free(struct MtProcess *process);

// # Safety
// Both pointers must be valid.
enum MtStatus mt_process_info(const struct MtProcess *process, struct MtProcessInfo *out);

// Copies the Choi vector into `out`, which must hold exactly `len` complex
// entries with `len` equal to `MtProcessInfo::total_dim`.
//
// # Safety
// `out` must be writable for `2 * len` doubles.
enum MtStatus mt_process_choi(const struct MtProcess *process, double *out, size_t len);

// Per-step dynamical entropy S(Υ_B)/k in nats.
//
// # Safety
// Both pointers must be valid.
enum MtStatus mt_dynamical_entropy(const struct MtProcess *process, double *out);

// Both sides of the Pesin-type relation over the local unitary basis.
//
// # Safety
// All pointers must be valid.
enum MtStatus mt_pesin_check(const struct MtProcess *process, double *lhs, double *rhs);

// Tripartite information of a single-step process, with R₁ the first
// `r1_sites` final sites.
//
// # Safety
// Both pointers must be valid.
enum MtStatus mt_tripartite_mi(const struct MtProcess *process, size_t r1_sites, double *out);

// Optimized butterfly flutter fidelity for two unitary flutters given as
// `k` consecutive d_S × d_S matrices each. `budget` and `restarts` of 0
// select the library defaults.
//
// # Safety
// The flutter arrays must hold k·d_S² complex entries; `out` must be valid.
enum MtStatus mt_bff_optimize(const struct MtProcess *process,
                              const double *x_steps,
                              const double *y_steps,
                              enum MtFamily family,
                              size_t depth,
                              size_t budget,
                              size_t restarts,
                              uint64_t seed,
                              struct MtBffResult *out);

// Runs an experiment config file and writes its outputs, as the CLI `run`
// subcommand does. `exit_code` receives the CLI exit code (0 all assertions
// passed, 1 an assertion failed, 2 config error, 3 cap exceeded, 4 other
// failure). The status is `Ok` for codes 0 and 1; the failure message of
// any nonzero code is available from `mt_last_error_message`.
//
// # Safety
// `path` must be a NUL-terminated string and `exit_code` valid.
enum MtStatus mt_run_config(const char *path, int32_t *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MULTITIME_H */
