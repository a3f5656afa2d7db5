/* C interface to the hgfm engine.
 *
 * Every call returns an hgfm_status; on failure hgfm_last_error() holds a
 * message for the calling thread. Strings returned through char** are
 * heap-allocated and released with hgfm_string_free. Handles are opaque and
 * released with their matching *_free function (NULL is accepted). */
#ifndef HGFM_H
#define HGFM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define HGFM_API __declspec(dllexport)
#else
#define HGFM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hgfm_status {
  HGFM_OK = 0,
  HGFM_ERR_INVALID_ARGUMENT = 1,
  HGFM_ERR_DIMENSION = 2,
  HGFM_ERR_IO = 3,
  HGFM_ERR_FORMAT = 4,
  HGFM_ERR_INTEGRITY = 5,
  HGFM_ERR_NUMERIC = 6,
  HGFM_ERR_INTERNAL = 7
} hgfm_status;

typedef struct hgfm_algebra hgfm_algebra;
typedef struct hgfm_dataset hgfm_dataset;
typedef struct hgfm_model hgfm_model;

HGFM_API const char* hgfm_version(void);
HGFM_API const char* hgfm_status_name(hgfm_status status);
HGFM_API const char* hgfm_last_error(void);
HGFM_API void hgfm_string_free(char* s);

/* Algebra */
HGFM_API hgfm_status hgfm_algebra_two_term(int n, hgfm_algebra** out);
HGFM_API hgfm_status hgfm_algebra_lie(int n, hgfm_algebra** out);
HGFM_API hgfm_status hgfm_algebra_from_json(const char* json, hgfm_algebra** out);
HGFM_API void hgfm_algebra_free(hgfm_algebra* alg);
HGFM_API hgfm_status hgfm_algebra_to_json(const hgfm_algebra* alg, char** out_json);
/* Dimensions of degree 0 and degree 1, and the highest bracket arity. */
HGFM_API hgfm_status hgfm_algebra_dims(const hgfm_algebra* alg, size_t* dim0, size_t* dim1, int* max_arity);
/* args[j] points at total_dim flat coordinates (degree 0 block first). */
HGFM_API hgfm_status hgfm_algebra_bracket(const hgfm_algebra* alg, int arity, const double* const* args, double* out,
                                          size_t out_len);
HGFM_API hgfm_status hgfm_algebra_check_skew(const hgfm_algebra* alg, int arity, int trials, double tol, uint64_t seed,
                                             double* max_residual, int* passed);
HGFM_API hgfm_status hgfm_algebra_check_jacobi(const hgfm_algebra* alg, int k, int trials, double tol, uint64_t seed,
                                               double* max_residual, int* passed);

/* Data. overrides_json may be NULL or a JSON object of GmmSpec keys. */
HGFM_API hgfm_status hgfm_generate_data(int n, uint64_t seed, const char* out_dir, int csv,
                                        const char* overrides_json);
HGFM_API hgfm_status hgfm_dataset_load(const char* path, hgfm_dataset** out);
HGFM_API void hgfm_dataset_free(hgfm_dataset* ds);
HGFM_API hgfm_status hgfm_dataset_shape(const hgfm_dataset* ds, int* rows, int* n);
/* Row-major rows x n view, valid while the handle lives. */
HGFM_API hgfm_status hgfm_dataset_points(const hgfm_dataset* ds, const double** points);

/* Models. variant is "plain", "gauge" or "hgfm"; options_json may be NULL. */
HGFM_API hgfm_status hgfm_model_create(const char* variant, int n, uint64_t seed, const char* options_json,
                                       hgfm_model** out);
HGFM_API hgfm_status hgfm_model_load(const char* path, hgfm_model** out, int64_t* step);
HGFM_API hgfm_status hgfm_model_save(const hgfm_model* model, const char* path, int64_t step);
HGFM_API void hgfm_model_free(hgfm_model* model);
HGFM_API hgfm_status hgfm_model_info(const hgfm_model* model, int* n, size_t* param_count);
/* out receives N values. */
HGFM_API hgfm_status hgfm_model_field(const hgfm_model* model, const double* x, double t, double* out);
HGFM_API hgfm_status hgfm_param_count(const char* variant, int n, const char* options_json, size_t* out);
HGFM_API hgfm_status hgfm_model_describe(const char* variant, int n, const char* options_json, char** out_json);

/* Training. config_json holds TrainConfig keys; test_loss is NaN on steps without evaluation. */
typedef void (*hgfm_step_callback)(int64_t step, double train_loss, double test_loss, void* user);
HGFM_API hgfm_status hgfm_config_parse(const char* key_values, char** out_json);
HGFM_API hgfm_status hgfm_train(hgfm_model* model, const hgfm_dataset* train_set, const hgfm_dataset* test_set,
                                const char* config_json, hgfm_step_callback callback, void* user,
                                char** out_metrics_json);
HGFM_API hgfm_status hgfm_evaluate(const hgfm_model* model, const hgfm_dataset* ds, int n_pairs, uint64_t seed,
                                   double* loss);

/* Sampling. method is "euler" or "rk4"; out receives n_samples x N values row-major. */
HGFM_API hgfm_status hgfm_sample(const hgfm_model* model, int n_samples, int steps, uint64_t seed, const char* method,
                                 double* out);
HGFM_API hgfm_status hgfm_save_points(const char* path, int n, const double* points, size_t rows,
                                      const char* meta_json);

/* Experiments. exit_code follows the harness contract (0 complete, 2 partial). */
typedef void (*hgfm_log_callback)(const char* message, void* user);
HGFM_API hgfm_status hgfm_run_experiment(const char* plan_json, const char* out_dir, hgfm_log_callback log, void* user,
                                         char** out_report_json, int* exit_code);
/* format is "json", "csv" or "md". */
HGFM_API hgfm_status hgfm_report_render(const char* report_json, const char* format, char** out_text);

#ifdef __cplusplus
}
#endif

#endif
