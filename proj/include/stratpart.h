#ifndef STRATPART_H
#define STRATPART_H

/* C interface to the strategic-participation toolkit: dataset ingestion,
 * synthetic generation with planted truth, estimator suites, test batteries,
 * reproduction reports, and the participation-game equilibrium solver.
 *
 * Conventions:
 *   - every fallible call returns an sp_status; SP_OK is 0
 *   - on failure, sp_last_error() describes the problem (thread-local)
 *   - strings returned through char** are heap-allocated; release them with
 *     sp_string_free
 *   - structured inputs and outputs are JSON documents; grids are CSV text
 */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sp_status {
  SP_OK = 0,
  SP_ERR_ARGUMENT = 1,   /* null pointer or malformed scalar argument */
  SP_ERR_PARSE = 2,      /* unreadable file or malformed CSV/JSON */
  SP_ERR_VALIDATION = 3, /* well-formed input violating a domain rule */
  SP_ERR_ESTIMATION = 4, /* fit or test failed on valid data */
  SP_ERR_INTERNAL = 5    /* unexpected condition; please report */
} sp_status;

typedef struct sp_dataset sp_dataset;

const char* sp_version(void);
const char* sp_status_name(sp_status status);

/* message of the most recent failure on this thread; empty after a success */
const char* sp_last_error(void);

void sp_string_free(char* s);

/* ---- datasets ------------------------------------------------------- */

/* beliefs_are_percent != 0 divides the three belief columns by 100 */
sp_status sp_dataset_read_csv(const char* dataset_path, const char* signals_path,
                              int beliefs_are_percent, sp_dataset** out);

sp_status sp_dataset_write_csv(const sp_dataset* ds, const char* dataset_path,
                               const char* signals_path);

/* generates a population from a simulation-config JSON document; truth_json
 * (optional) receives the planted-parameter sidecar, warnings_json (optional)
 * a JSON array of generation warnings */
sp_status sp_dataset_simulate(const char* config_json, sp_dataset** out, char** truth_json,
                              char** warnings_json);

size_t sp_dataset_n(const sp_dataset* ds);

sp_status sp_dataset_summary(const sp_dataset* ds, char** summary_json);

void sp_dataset_free(sp_dataset* ds);

/* named simulation presets; currently "paper2019" */
sp_status sp_preset_config(const char* name, char** config_json);

/* ---- pipeline runs --------------------------------------------------- */

/* options documents accept a subset of the fields below; omitted fields take
 * the documented defaults.
 *
 * estimate: {"estimators": [..], "location_fe": true, "date_fe": true,
 *            "belief_fe": false, "grid": [-0.4,...], "bootstrap_reps": 0,
 *            "cluster_keys": [..], "seed": 0, "truth": {...}}
 * test:     {"treat_prob": 0.6667, "late_replications": 999, "seed": 1234,
 *            "location_fe": true, "date_fe": true}
 * reproduce:{"tolerances": {"beta_cf_mle": .01, ...}, "location_fe": true,
 *            "date_fe": true}
 * sweep:    {"config": {...simulation config...}, "seeds": [1,2,...],
 *            "location_fe": true, "date_fe": true}
 */

sp_status sp_estimate(const sp_dataset* ds, const char* options_json, char** results_json);

sp_status sp_margins_curve(const sp_dataset* ds, const char* options_json, char** csv_text);

sp_status sp_test_battery(const sp_dataset* ds, const char* options_json, char** results_json);

/* all_pass (optional) receives 1 when every target matched within tolerance */
sp_status sp_reproduce(const sp_dataset* ds, const char* options_json, char** report_json,
                       int* all_pass);

sp_status sp_sweep(const char* options_json, char** results_json);

/* ---- participation game ---------------------------------------------- */

/* tol must be positive; 1e-12 is a sensible default.
 * result: {"b_star":.., "iterations":.., "residual":.., "unique":..,
 *          "all_roots": [..]} */
sp_status sp_solve_equilibrium(double alpha, double beta, double tol, char** result_json);

/* result: {"naive_response":.., "equilibrium_response":.., "offset_share":..} */
sp_status sp_free_riding_offset(double alpha, double alpha_shift, double beta,
                                char** result_json);

#ifdef __cplusplus
}
#endif

#endif /* STRATPART_H */
