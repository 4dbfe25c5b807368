/* hybem: forward solver for quasi-static potentials in nested conductors,
 * with equivalent volume and thin-wire currents for anisotropic regions.
 *
 * All functions are thread-compatible; handles must not be shared across
 * threads without external synchronization. Functions returning hybem_status
 * leave a diagnostic readable via hybem_last_error() on failure.
 */
#ifndef HYBEM_H
#define HYBEM_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#ifdef HYBEM_BUILD
#define HYBEM_API __declspec(dllexport)
#else
#define HYBEM_API __declspec(dllimport)
#endif
#else
#define HYBEM_API __attribute__((visibility("default")))
#endif

typedef enum hybem_status {
  HYBEM_OK = 0,
  HYBEM_ERR_IO = 1,      /* file missing or unreadable */
  HYBEM_ERR_PARSE = 2,   /* malformed input file */
  HYBEM_ERR_INVALID = 3, /* invalid geometry, configuration, or argument */
  HYBEM_ERR_SOLVER = 4,  /* assembly or linear-solve failure */
  HYBEM_ERR_BOUND = 5    /* a configured validation bound was exceeded */
} hybem_status;

/* Library version string, static storage. */
HYBEM_API const char* hybem_version(void);

/* Message of the last failing call on the calling thread; empty when none. */
HYBEM_API const char* hybem_last_error(void);

/* A parsed run configuration (file format documented in the README). */
typedef struct hybem_config hybem_config;

HYBEM_API hybem_status hybem_config_load(const char* path, hybem_config** out);

/* Override one entry, e.g. hybem_config_set(cfg, "solver.type", "iterative"). */
HYBEM_API hybem_status hybem_config_set(hybem_config* cfg, const char* key, const char* value);

HYBEM_API void hybem_config_destroy(hybem_config* cfg);

/* A forward model built from a configuration: geometry loaded and validated,
 * degrees of freedom laid out. The system matrix is assembled and factorized
 * on the first solve and reused afterwards. */
typedef struct hybem_model hybem_model;

HYBEM_API hybem_status hybem_model_create(const hybem_config* cfg, hybem_model** out);
HYBEM_API void hybem_model_destroy(hybem_model* m);

HYBEM_API hybem_status hybem_model_dof_count(const hybem_model* m, size_t* out);
HYBEM_API hybem_status hybem_model_electrode_count(const hybem_model* m, size_t* out);

/* Mean-referenced electrode potentials (volts) for a dipole at `position`
 * (meters) with moment `moment` (ampere meters). `phi` receives one value
 * per electrode; phi_len must equal the electrode count. */
HYBEM_API hybem_status hybem_model_solve_dipole(hybem_model* m, const double position[3],
                                                const double moment[3], double* phi,
                                                size_t phi_len);

/* Human-readable mesh and DoF statistics. Writes at most `cap` bytes
 * including the terminator; *needed receives the untruncated length. */
HYBEM_API hybem_status hybem_model_describe(const hybem_model* m, char* buffer, size_t cap,
                                            size_t* needed);

/* Scenario drivers behind the command-line verbs. Each runs a whole study
 * from the configuration and writes CSV files into its output directory.
 * hybem_run_validate_sphere returns HYBEM_ERR_BOUND when the solver error
 * against the layered-sphere series exceeds the configured bound. */
HYBEM_API hybem_status hybem_run_solve(const hybem_config* cfg);
HYBEM_API hybem_status hybem_run_leadfield(const hybem_config* cfg);
HYBEM_API hybem_status hybem_run_validate_sphere(const hybem_config* cfg);

#ifdef __cplusplus
}
#endif

#endif /* HYBEM_H */
