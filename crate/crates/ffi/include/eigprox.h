#ifndef EIGPROX_H
#define EIGPROX_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EigproxMethod {
  EIGPROX_METHOD_SMP = 0,
  EIGPROX_METHOD_MP = 1,
  EIGPROX_METHOD_MD = 2,
} EigproxMethod;

typedef enum EigproxStatus {
  EIGPROX_STATUS_OK = 0,
  EIGPROX_STATUS_NULL_POINTER = 1,
  EIGPROX_STATUS_INVALID_ARGUMENT = 2,
  EIGPROX_STATUS_IO = 3,
  EIGPROX_STATUS_FORMAT = 4,
  EIGPROX_STATUS_NUMERIC = 5,
  EIGPROX_STATUS_PANIC = 6,
} EigproxStatus;

// Opaque problem instance.
typedef struct EigproxInstance EigproxInstance;

// Opaque solver report.
typedef struct EigproxReport EigproxReport;

typedef struct EigproxGeneratorSpec {
  size_t n;
  size_t m;
  double density;
  bool joint_pattern;
  uint64_t seed;
  double scaling;
} EigproxGeneratorSpec;

typedef struct EigproxSolverOptions {
  enum EigproxMethod method;
  double eps;
  size_t samples;
  double rho;
  size_t max_iter;
  uint64_t seed;
  size_t repeats;
} EigproxSolverOptions;

typedef struct EigproxSummary {
  size_t n;
  size_t m;
  size_t iterations;
  bool converged;
  double objective;
  double gap;
  double lipschitz;
  double wallclock_s;
} EigproxSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *eigprox_last_error(void);

// # Safety
// `out` must be null or point to writable memory for one spec.
enum EigproxStatus eigprox_generator_spec_default(struct EigproxGeneratorSpec *out);

// # Safety
// `out` must be null or point to writable memory for one options struct.
enum EigproxStatus eigprox_solver_options_default(struct EigproxSolverOptions *out);

// # Safety
// `spec` must point to a valid spec; `out` to writable storage for a handle.
enum EigproxStatus eigprox_instance_generate(const struct EigproxGeneratorSpec *spec,
                                             struct EigproxInstance **out);

// # Safety
// `path` must be a nul-terminated string; `out` writable storage for a handle.
enum EigproxStatus eigprox_instance_load(const char *path, struct EigproxInstance **out);

// # Safety
// `inst` must be a live handle; `path` a nul-terminated string.
enum EigproxStatus eigprox_instance_save(const struct EigproxInstance *inst, const char *path);

// Dimensions and stored upper-triangle entries per matrix. Any output
// pointer may be null.
//
// # Safety
// `inst` must be a live handle; non-null outputs must be writable.
enum EigproxStatus eigprox_instance_dims(const struct EigproxInstance *inst,
                                         size_t *n,
                                         size_t *m,
                                         size_t *nnz);

// `max_j ||A_j||`, computed on first use.
//
// # Safety
// `inst` must be a live handle; `out` writable.
enum EigproxStatus eigprox_instance_lipschitz(const struct EigproxInstance *inst, double *out);

// # Safety
// `inst` must be null or a handle not yet freed.
void eigprox_instance_free(struct EigproxInstance *inst);

// Runs a solver. Returns `EIGPROX_STATUS_OK` also when the iteration limit
// was reached; check `converged` in the summary.
//
// # Safety
// `inst` must be a live handle, `opts` valid, `out` writable.
enum EigproxStatus eigprox_solve(const struct EigproxInstance *inst,
                                 const struct EigproxSolverOptions *opts,
                                 struct EigproxReport **out);

// # Safety
// `report` must be a live handle; `out` writable.
enum EigproxStatus eigprox_report_summary(const struct EigproxReport *report,
                                          struct EigproxSummary *out);

// Copies the averaged primal point into `buf` (capacity `len`). The full
// length is stored in `needed`; a short buffer is an invalid argument.
//
// # Safety
// `report` must be a live handle; `buf` writable for `len` doubles (or null
// with `len == 0`); `needed` null or writable.
enum EigproxStatus eigprox_report_x(const struct EigproxReport *report,
                                    double *buf,
                                    size_t len,
                                    size_t *needed);

// Full report as JSON, stored in `out`; release with [`eigprox_string_free`].
//
// # Safety
// `report` must be a live handle; `out` writable.
enum EigproxStatus eigprox_report_to_json(const struct EigproxReport *report, char **out);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void eigprox_string_free(char *s);

// # Safety
// `report` must be null or a handle not yet freed.
void eigprox_report_free(struct EigproxReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EIGPROX_H */
