#ifndef HOLDMPC_H
#define HOLDMPC_H

/*
 * C interface to the hold-MPC toolkit and its adaptive cruise control study.
 *
 * All objects are opaque handles created by a *_create / *_load / *_compute
 * call and released with the matching *_free (which accepts NULL).  Every
 * fallible call returns an hm_status; on failure hm_last_error() describes
 * the problem.  The message is kept per thread until the next failing call.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define HM_API __declspec(dllexport)
#else
#define HM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hm_status {
  HM_OK = 0,
  HM_ERR_INVALID_ARGUMENT = 1,
  HM_ERR_DIMENSION_MISMATCH = 2,
  HM_ERR_NON_CONVEX = 3,
  HM_ERR_EMPTY_SUBTRAHEND = 4,
  HM_ERR_UNBOUNDED_SUBTRAHEND = 5,
  HM_ERR_UNBOUNDED = 6,
  HM_ERR_UNSUPPORTED = 7,
  HM_ERR_NO_CONVERGENCE = 8,
  HM_ERR_EMPTY_TIGHTENED_SET = 9,
  HM_ERR_EMPTY_SLICE = 10,
  HM_ERR_INFEASIBLE = 11,
  HM_ERR_INFEASIBLE_AT_RESOLVE = 12,
  HM_ERR_INDEX_OUT_OF_FAMILY = 13,
  HM_ERR_CONFIG = 14,
  HM_ERR_IO = 15,
  HM_ERR_ALREADY_EXISTS = 16,
  HM_ERR_SOLVER = 17,
  HM_ERR_INTERNAL = 99
} hm_status;

typedef struct hm_config hm_config;
typedef struct hm_families hm_families;
typedef struct hm_controller hm_controller;
typedef struct hm_runs hm_runs;

typedef void (*hm_warning_fn)(const char* message, void* user);

HM_API const char* hm_version(void);
HM_API const char* hm_status_name(hm_status status);
/* Message of the last failure on this thread ("" if none). */
HM_API const char* hm_last_error(void);
/*
 * Extra data for the last failure, or "" if none.  After
 * HM_ERR_NO_CONVERGENCE or HM_ERR_EMPTY_SLICE this is the text form of the
 * last usable iterate.
 */
HM_API const char* hm_last_error_detail(void);
/* Route library warnings to fn; NULL restores printing to stderr. */
HM_API void hm_set_warning_handler(hm_warning_fn fn, void* user);

/* ---- study configuration ---------------------------------------------- */

HM_API hm_status hm_config_parse(const char* json_text, hm_config** out);
HM_API hm_status hm_config_load(const char* path, hm_config** out);
HM_API void hm_config_free(hm_config* cfg);
HM_API hm_status hm_config_set_seed(hm_config* cfg, uint64_t seed);
/* Tolerance for flagging constraint violations in simulated traces. */
HM_API hm_status hm_config_set_violation_tol(hm_config* cfg, double tol);
/* 1 for the adaptive study, 0 for the brake study. */
HM_API hm_status hm_config_is_adaptive(const hm_config* cfg, int* adaptive);
HM_API hm_status hm_config_horizon(const hm_config* cfg, int* N);
/* Front and ego velocity limits [v_min, v_max]. */
HM_API hm_status hm_config_velocity_range(const hm_config* cfg, double* v_min, double* v_max);
/* Hold lengths the study needs: params.M for the brake study, the
 * supervisor ladder for the adaptive one.  Sorted, without duplicates. */
HM_API hm_status hm_config_holds(const hm_config* cfg, int* holds, size_t capacity,
                                 size_t* count);

/* ---- slice families ---------------------------------------------------- */

typedef struct hm_family_stats {
  size_t lower_slices;
  size_t upper_slices;
  int lower_iterations; /* fixed-point iterations of the base slices */
  int upper_iterations;
  double seconds;
} hm_family_stats;

HM_API hm_status hm_families_compute(const hm_config* cfg, int M, hm_families** out,
                                     hm_family_stats* stats);
/* Writes <dir>/lower and <dir>/upper.  Without overwrite an existing
 * archive gives HM_ERR_ALREADY_EXISTS and nothing is written. */
HM_API hm_status hm_families_write(const hm_families* fam, const hm_config* cfg,
                                   const char* dir, int overwrite);
HM_API hm_status hm_families_read(const hm_config* cfg, const char* dir, int M,
                                  hm_families** out);
HM_API void hm_families_free(hm_families* fam);
HM_API hm_status hm_families_info(const hm_families* fam, int* M, size_t* lower_slices,
                                  size_t* upper_slices);

/* ---- controller -------------------------------------------------------- */

/* The controller copies what it needs; the families may be freed after. */
HM_API hm_status hm_controller_create(const hm_config* cfg, const hm_families* const* fams,
                                      size_t count, hm_controller** out);
HM_API void hm_controller_free(hm_controller* ctl);

/*
 * Vertices of the (d, v1) cross-section of the online slice for hold M at
 * front velocity v0, in counter-clockwise order as x0, y0, x1, y1, ...
 * *count receives the vertex count even if capacity (in vertices) is too
 * small, in which case nothing is written and HM_ERR_INVALID_ARGUMENT is
 * returned.  *clamped is set when the slot index ran past the family.
 */
HM_API hm_status hm_slice_vertices(const hm_controller* ctl, int M, double v0, double* xy,
                                   size_t capacity, size_t* count, int* clamped);

/*
 * Whether switching from hold M_from to M_to at state x = (d, v1, v0) keeps
 * the problem recursively feasible.  *violated_row is -1 when safe.
 * M_to must divide the horizon N and have a family in the controller.
 */
HM_API hm_status hm_check_switch(const hm_controller* ctl, const double x[3], int M_from,
                                 int M_to, double tol, int* safe, int* violated_row);

/* ---- studies ----------------------------------------------------------- */

typedef struct hm_run_summary {
  int initial_M;
  int final_M;
  size_t steps;
  size_t violations;
  size_t solves;
  size_t feasible_solves;
  size_t switches;
  int halted;
  double min_distance;
  double final_ego_velocity;
} hm_run_summary;

HM_API hm_status hm_study_run(const hm_config* cfg, const hm_controller* ctl, hm_runs** out);
HM_API void hm_runs_free(hm_runs* runs);
HM_API size_t hm_runs_count(const hm_runs* runs);
/* NULL if index is out of range.  Valid until the runs are freed. */
HM_API const char* hm_run_name(const hm_runs* runs, size_t index);
HM_API const char* hm_run_halt_reason(const hm_runs* runs, size_t index);
HM_API hm_status hm_run_summary_get(const hm_runs* runs, size_t index, hm_run_summary* out);
HM_API hm_status hm_run_write_csv(const hm_runs* runs, size_t index, const char* path);

#ifdef __cplusplus
}
#endif

#endif /* HOLDMPC_H */
