#include "hgfm/hgfm.h"

#include "hgfm/error.hpp"
#include "hgfm/experiment.hpp"
#include "hgfm/flow_field.hpp"
#include "hgfm/gmm.hpp"
#include "hgfm/graded_algebra.hpp"
#include "hgfm/models.hpp"
#include "hgfm/ode.hpp"
#include "hgfm/son_algebra.hpp"
#include "hgfm/training.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <memory>
#include <new>
#include <string>

struct hgfm_algebra {
  hgfm::algebra::LInfinityAlgebra alg;
};

struct hgfm_dataset {
  hgfm::data::Dataset ds;
};

struct hgfm_model {
  hgfm::model::FlowModel model;
};

namespace {

using hgfm::ErrorCode;

thread_local std::string last_error;

hgfm_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return HGFM_ERR_INVALID_ARGUMENT;
    case ErrorCode::dimension_mismatch: return HGFM_ERR_DIMENSION;
    case ErrorCode::io: return HGFM_ERR_IO;
    case ErrorCode::format: return HGFM_ERR_FORMAT;
    case ErrorCode::integrity: return HGFM_ERR_INTEGRITY;
    case ErrorCode::numeric: return HGFM_ERR_NUMERIC;
  }
  return HGFM_ERR_INTERNAL;
}

template <typename F>
hgfm_status guarded(F&& body) {
  try {
    last_error.clear();
    body();
    return HGFM_OK;
  } catch (const hgfm::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const nlohmann::json::exception& e) {
    last_error = std::string("json: ") + e.what();
    return HGFM_ERR_FORMAT;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return HGFM_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return HGFM_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return HGFM_ERR_INTERNAL;
  }
}

void need(const void* p, const char* name) {
  hgfm::require(p != nullptr, ErrorCode::invalid_argument, std::string(name) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

nlohmann::json parse_optional_json(const char* text) {
  if (!text || !*text) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    hgfm::fail(ErrorCode::format, std::string("invalid JSON: ") + e.what());
  }
}

hgfm::model::ModelOptions parse_options(const char* text) {
  const auto j = parse_optional_json(text);
  hgfm::model::ModelOptions o;
  for (const auto& [key, value] : j.items()) {
    if (key == "hidden_width") o.hidden_width = value.get<int>();
    else if (key == "direction_net") o.direction_net = value.get<bool>();
    else if (key == "two_field") o.two_field = value.get<bool>();
    else hgfm::fail(ErrorCode::format, "unknown model option '" + key + "'");
  }
  hgfm::require(o.hidden_width >= 0, ErrorCode::invalid_argument, "hidden_width must be >= 0");
  return o;
}

}  // namespace

extern "C" {

const char* hgfm_version(void) { return "1.0.0"; }

const char* hgfm_status_name(hgfm_status status) {
  switch (status) {
    case HGFM_OK: return "ok";
    case HGFM_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case HGFM_ERR_DIMENSION: return "dimension_mismatch";
    case HGFM_ERR_IO: return "io";
    case HGFM_ERR_FORMAT: return "format";
    case HGFM_ERR_INTEGRITY: return "integrity";
    case HGFM_ERR_NUMERIC: return "numeric";
    case HGFM_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* hgfm_last_error(void) { return last_error.c_str(); }

void hgfm_string_free(char* s) { std::free(s); }

// ---------------------------------------------------------------------------

hgfm_status hgfm_algebra_two_term(int n, hgfm_algebra** out) {
  return guarded([&] {
    need(out, "out");
    *out = new hgfm_algebra{hgfm::son::build_two_term(n)};
  });
}

hgfm_status hgfm_algebra_lie(int n, hgfm_algebra** out) {
  return guarded([&] {
    need(out, "out");
    *out = new hgfm_algebra{hgfm::son::build_lie_algebra(n)};
  });
}

hgfm_status hgfm_algebra_from_json(const char* json, hgfm_algebra** out) {
  return guarded([&] {
    need(json, "json");
    need(out, "out");
    *out = new hgfm_algebra{hgfm::algebra::algebra_from_json(json)};
  });
}

void hgfm_algebra_free(hgfm_algebra* alg) { delete alg; }

hgfm_status hgfm_algebra_to_json(const hgfm_algebra* alg, char** out_json) {
  return guarded([&] {
    need(alg, "alg");
    need(out_json, "out_json");
    *out_json = dup_string(hgfm::algebra::algebra_to_json(alg->alg));
  });
}

hgfm_status hgfm_algebra_dims(const hgfm_algebra* alg, size_t* dim0, size_t* dim1, int* max_arity) {
  return guarded([&] {
    need(alg, "alg");
    if (dim0) *dim0 = alg->alg.space().dim(0);
    if (dim1) *dim1 = alg->alg.space().dim(1);
    if (max_arity) *max_arity = alg->alg.max_arity();
  });
}

hgfm_status hgfm_algebra_bracket(const hgfm_algebra* alg, int arity, const double* const* args, double* out,
                                 size_t out_len) {
  return guarded([&] {
    need(alg, "alg");
    need(out, "out");
    hgfm::require(arity >= 1, ErrorCode::invalid_argument, "arity must be >= 1");
    need(args, "args");
    const auto& space = alg->alg.space();
    const std::size_t dim = space.total_dim();
    hgfm::require(out_len == dim, ErrorCode::dimension_mismatch,
                  "out_len " + std::to_string(out_len) + " != total dimension " + std::to_string(dim));
    std::vector<hgfm::algebra::GradedVector> vs;
    for (int j = 0; j < arity; ++j) {
      need(args[j], "args[j]");
      vs.emplace_back(space, std::vector<double>(args[j], args[j] + dim));
    }
    const auto r = hgfm::algebra::eval_bracket(alg->alg, arity, vs);
    std::copy(r.coords().begin(), r.coords().end(), out);
  });
}

hgfm_status hgfm_algebra_check_skew(const hgfm_algebra* alg, int arity, int trials, double tol, uint64_t seed,
                                    double* max_residual, int* passed) {
  return guarded([&] {
    need(alg, "alg");
    const auto r = hgfm::algebra::check_skew(alg->alg, arity, trials, tol, seed);
    if (max_residual) *max_residual = r.max_residual;
    if (passed) *passed = r.passed ? 1 : 0;
  });
}

hgfm_status hgfm_algebra_check_jacobi(const hgfm_algebra* alg, int k, int trials, double tol, uint64_t seed,
                                      double* max_residual, int* passed) {
  return guarded([&] {
    need(alg, "alg");
    const auto r = hgfm::algebra::check_jacobi(alg->alg, k, trials, tol, seed);
    if (max_residual) *max_residual = r.max_residual;
    if (passed) *passed = r.passed ? 1 : 0;
  });
}

// ---------------------------------------------------------------------------

hgfm_status hgfm_generate_data(int n, uint64_t seed, const char* out_dir, int csv, const char* overrides_json) {
  return guarded([&] {
    need(out_dir, "out_dir");
    auto spec = hgfm::data::GmmSpec::for_dimension(n, seed);
    auto j = spec.to_json();
    const auto overrides = parse_optional_json(overrides_json);
    for (const auto& [key, value] : overrides.items()) {
      hgfm::require(j.contains(key) && key != "n" && key != "seed", ErrorCode::format,
                    "unknown data override '" + key + "'");
      j[key] = value;
    }
    hgfm::data::generate_to_dir(hgfm::data::GmmSpec::from_json(j), out_dir, csv != 0);
  });
}

hgfm_status hgfm_dataset_load(const char* path, hgfm_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new hgfm_dataset{hgfm::data::load_dataset(path)};
  });
}

void hgfm_dataset_free(hgfm_dataset* ds) { delete ds; }

hgfm_status hgfm_dataset_shape(const hgfm_dataset* ds, int* rows, int* n) {
  return guarded([&] {
    need(ds, "ds");
    if (rows) *rows = ds->ds.rows;
    if (n) *n = ds->ds.n;
  });
}

hgfm_status hgfm_dataset_points(const hgfm_dataset* ds, const double** points) {
  return guarded([&] {
    need(ds, "ds");
    need(points, "points");
    *points = ds->ds.points.data();
  });
}

// ---------------------------------------------------------------------------

hgfm_status hgfm_model_create(const char* variant, int n, uint64_t seed, const char* options_json, hgfm_model** out) {
  return guarded([&] {
    need(variant, "variant");
    need(out, "out");
    *out = new hgfm_model{hgfm::model::build_model(hgfm::model::parse_variant(variant), n, seed,
                                                   parse_options(options_json))};
  });
}

hgfm_status hgfm_model_load(const char* path, hgfm_model** out, int64_t* step) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    std::int64_t s = 0;
    *out = new hgfm_model{hgfm::model::load_checkpoint(path, &s)};
    if (step) *step = s;
  });
}

hgfm_status hgfm_model_save(const hgfm_model* model, const char* path, int64_t step) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    hgfm::model::save_checkpoint(model->model, path, step);
  });
}

void hgfm_model_free(hgfm_model* model) { delete model; }

hgfm_status hgfm_model_info(const hgfm_model* model, int* n, size_t* param_count) {
  return guarded([&] {
    need(model, "model");
    if (n) *n = model->model.n();
    if (param_count) *param_count = model->model.param_count();
  });
}

hgfm_status hgfm_model_field(const hgfm_model* model, const double* x, double t, double* out) {
  return guarded([&] {
    need(model, "model");
    need(x, "x");
    need(out, "out");
    const auto n = static_cast<std::size_t>(model->model.n());
    hgfm::flow::FlowState state{std::vector<double>(x, x + n), t};
    const auto f = model->model.variant() == hgfm::model::Variant::hgfm
                       ? hgfm::flow::hgfm_field(model->model, state)
                       : hgfm::flow::baseline_field(model->model, state);
    std::copy(f.begin(), f.end(), out);
  });
}

hgfm_status hgfm_param_count(const char* variant, int n, const char* options_json, size_t* out) {
  return guarded([&] {
    need(variant, "variant");
    need(out, "out");
    *out = hgfm::model::count_params(hgfm::model::parse_variant(variant), n, parse_options(options_json));
  });
}

hgfm_status hgfm_model_describe(const char* variant, int n, const char* options_json, char** out_json) {
  return guarded([&] {
    need(variant, "variant");
    need(out_json, "out_json");
    *out_json = dup_string(
        hgfm::model::describe(hgfm::model::parse_variant(variant), n, parse_options(options_json)).dump(2));
  });
}

// ---------------------------------------------------------------------------

hgfm_status hgfm_config_parse(const char* key_values, char** out_json) {
  return guarded([&] {
    need(key_values, "key_values");
    need(out_json, "out_json");
    *out_json = dup_string(hgfm::train::TrainConfig::from_key_values(key_values).to_json().dump(2));
  });
}

hgfm_status hgfm_train(hgfm_model* model, const hgfm_dataset* train_set, const hgfm_dataset* test_set,
                       const char* config_json, hgfm_step_callback callback, void* user, char** out_metrics_json) {
  return guarded([&] {
    need(model, "model");
    need(train_set, "train_set");
    need(test_set, "test_set");
    auto config = hgfm::train::TrainConfig::from_json(parse_optional_json(config_json));
    hgfm::require(config.model_options == model->model.options(), ErrorCode::invalid_argument,
                  "config model options differ from the model's architecture");
    hgfm::train::StepCallback cb;
    if (callback) {
      cb = [&](const hgfm::train::StepRecord& r) {
        callback(r.step, r.train_loss, r.test_loss.value_or(std::numeric_limits<double>::quiet_NaN()), user);
      };
    }
    const auto metrics = hgfm::train::train(model->model, train_set->ds, test_set->ds, config, cb);
    if (out_metrics_json) *out_metrics_json = dup_string(metrics.to_json().dump());
  });
}

hgfm_status hgfm_evaluate(const hgfm_model* model, const hgfm_dataset* ds, int n_pairs, uint64_t seed, double* loss) {
  return guarded([&] {
    need(model, "model");
    need(ds, "ds");
    need(loss, "loss");
    *loss = hgfm::train::evaluate(model->model, ds->ds, n_pairs, seed);
  });
}

// ---------------------------------------------------------------------------

hgfm_status hgfm_sample(const hgfm_model* model, int n_samples, int steps, uint64_t seed, const char* method,
                        double* out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    hgfm::ode::GenerateOptions o;
    o.steps = steps;
    o.method = method ? hgfm::ode::parse_method(method) : hgfm::ode::Method::rk4;
    const auto samples = hgfm::ode::generate(model->model, n_samples, seed, o);
    std::copy(samples.begin(), samples.end(), out);
  });
}

hgfm_status hgfm_save_points(const char* path, int n, const double* points, size_t rows, const char* meta_json) {
  return guarded([&] {
    need(path, "path");
    hgfm::require(rows == 0 || points != nullptr, ErrorCode::invalid_argument, "points must not be NULL");
    hgfm::require(n >= 1, ErrorCode::invalid_argument, "n must be >= 1");
    hgfm::data::save_points(path, n, {points, rows * static_cast<std::size_t>(n)}, parse_optional_json(meta_json));
  });
}

// ---------------------------------------------------------------------------

hgfm_status hgfm_run_experiment(const char* plan_json, const char* out_dir, hgfm_log_callback log, void* user,
                                char** out_report_json, int* exit_code) {
  return guarded([&] {
    need(plan_json, "plan_json");
    auto plan = hgfm::experiment::ExperimentPlan::from_json(parse_optional_json(plan_json));
    if (out_dir && *out_dir) plan.out_dir = out_dir;
    hgfm::experiment::Progress progress;
    if (log) progress = [&](const std::string& m) { log(m.c_str(), user); };
    const auto report = hgfm::experiment::run_experiment(plan, progress);
    if (out_report_json) *out_report_json = dup_string(report.to_json().dump(2));
    if (exit_code) *exit_code = hgfm::experiment::exit_code(report);
  });
}

hgfm_status hgfm_report_render(const char* report_json, const char* format, char** out_text) {
  return guarded([&] {
    need(report_json, "report_json");
    need(format, "format");
    need(out_text, "out_text");
    const auto report = hgfm::experiment::ComparisonReport::from_json(parse_optional_json(report_json));
    *out_text = dup_string(hgfm::experiment::render_report(report, hgfm::experiment::parse_format(format)));
  });
}

}  // extern "C"
