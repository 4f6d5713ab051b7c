/* C interface to the rbj library. Every function returns an rbj_status;
 * on failure rbj_last_error() describes the problem (per thread). Objects
 * returned through out-pointers are owned by the caller and released with
 * the matching *_free function. */
#ifndef RBJ_RBJ_H
#define RBJ_RBJ_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rbj_status {
  RBJ_OK = 0,
  RBJ_INVALID_ARGUMENT = 1,
  RBJ_NOT_CONNECTED = 2,
  RBJ_SINGULAR = 3,
  RBJ_PROTOCOL = 4,
  RBJ_NOT_CONVERGED = 5,
  RBJ_NO_FIT = 6,
  RBJ_IO = 7,
  RBJ_PARSE = 8,
  RBJ_INTERNAL = 9
} rbj_status;

const char* rbj_status_name(rbj_status s);
/* Message of the last failed call on this thread ("" if none). */
const char* rbj_last_error(void);

/* Graphs ---------------------------------------------------------------- */
typedef struct rbj_graph rbj_graph;

/* edges: num_edges pairs (i, j) laid out flat; dims: one block size per agent. */
rbj_status rbj_graph_create(size_t num_agents, const size_t* edges, size_t num_edges,
                            const size_t* dims, rbj_graph** out);
rbj_status rbj_graph_load(const char* path, rbj_graph** out);
rbj_status rbj_graph_num_agents(const rbj_graph* g, size_t* out);
/* Writes up to cap neighbor ids; *count receives the full degree. */
rbj_status rbj_graph_neighbors(const rbj_graph* g, size_t agent, size_t* buf, size_t cap,
                               size_t* count);
void rbj_graph_free(rbj_graph* g);

/* Scenario configs ------------------------------------------------------ */
typedef struct rbj_config rbj_config;

rbj_status rbj_config_new(rbj_config** out);
rbj_status rbj_config_load(const char* path, rbj_config** out);
rbj_status rbj_config_save(const rbj_config* cfg, const char* path);
rbj_status rbj_config_set(rbj_config* cfg, const char* key, const char* value);
/* Copies the value (NUL-terminated, truncated to cap); *needed receives the
 * full length including the terminator. */
rbj_status rbj_config_get(const rbj_config* cfg, const char* key, char* buf, size_t cap,
                          size_t* needed);
rbj_status rbj_config_validate(const rbj_config* cfg);
/* The whole config as key = value text; valid until the next call on cfg. */
rbj_status rbj_config_text(rbj_config* cfg, const char** text);
void rbj_config_free(rbj_config* cfg);

/* Experiments ----------------------------------------------------------- */
typedef struct rbj_report rbj_report;

rbj_status rbj_run_scenario(const rbj_config* cfg, rbj_report** out);
/* param: "epsilon", "areas" or "loss". */
rbj_status rbj_sweep(const rbj_config* cfg, const char* param, const double* values,
                     size_t num_values, rbj_report** out);
rbj_status rbj_compare_variants(const rbj_config* cfg, rbj_report** out);

/* Human-readable result: summary for runs, a CSV table for sweeps and
 * comparisons. Owned by the report. */
rbj_status rbj_report_text(const rbj_report* r, const char** text);
/* One row per replica (run), value (sweep) or variant (compare). */
rbj_status rbj_report_num_rows(const rbj_report* r, size_t* out);
/* *reached is 0 when the threshold was not reached (or the row diverged). */
rbj_status rbj_report_rounds_to_threshold(const rbj_report* r, size_t row, int* reached,
                                          size_t* rounds);
/* *has_rate is 0 when no rate could be fitted. */
rbj_status rbj_report_rate(const rbj_report* r, size_t row, int* has_rate, double* rho);
rbj_status rbj_report_diverged(const rbj_report* r, size_t row, int* diverged);
void rbj_report_free(rbj_report* r);

/* Problems and single runs ---------------------------------------------- */
typedef struct rbj_problem rbj_problem;

rbj_status rbj_problem_load(const char* path, rbj_problem** out);
/* The per-area cost of the scenario described by cfg. */
rbj_status rbj_problem_from_config(const rbj_config* cfg, rbj_problem** out);
rbj_status rbj_problem_save(const rbj_problem* p, const char* path);
rbj_status rbj_problem_dim(const rbj_problem* p, size_t* out);
rbj_status rbj_problem_num_agents(const rbj_problem* p, size_t* out);
rbj_status rbj_problem_value(const rbj_problem* p, const double* x, size_t n, double* out);
/* Centralized minimizer (closed form or Newton). x_out may be NULL. */
rbj_status rbj_problem_solve(const rbj_problem* p, double* x_out, size_t n, double* j_star);
void rbj_problem_free(rbj_problem* p);

typedef struct rbj_sim_options {
  const char* variant;   /* "rbj", "rgd" or "rwls" */
  const char* scheduler; /* "round" or "randomized" */
  double epsilon;
  double p_loss;
  size_t window_T;
  int enforce_persistence;
  uint64_t seed;
  size_t num_rounds;
} rbj_sim_options;

rbj_sim_options rbj_sim_options_default(void);

/* Runs the resilient protocol from x0 (NULL: zeros). Writes the trace CSV to
 * csv_path when non-NULL and the final state to x_final when non-NULL.
 * *diverged (optional) reports divergence. */
rbj_status rbj_simulate(const rbj_problem* p, const rbj_sim_options* opt, const double* x0,
                        size_t n, const char* csv_path, double* x_final, int* diverged);

#ifdef __cplusplus
}
#endif

#endif
