#pragma once

// Conditional flow matching on the linear path x_t = (1 - t) x0 + t x1 with
// target u = x1 - x0 and prior x0 ~ N(0, I).

#include "hgfm/gmm.hpp"
#include "hgfm/models.hpp"
#include "hgfm/nn.hpp"
#include "hgfm/rng.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hgfm::train {

using nn::Matrix;
using nn::Vector;

/// Column b holds one PathSample.
struct PathBatch {
  Vector t;
  Matrix x0;
  Matrix x1;
  Matrix xt;
  Matrix u;

  Eigen::Index size() const noexcept { return t.size(); }
};

PathBatch make_path(const Matrix& x0, const Matrix& x1, const Vector& t);
/// t ~ U[0, 1), x0 ~ N(0, I) per column of x1.
PathBatch sample_path(Rng& rng, const Matrix& x1);

/// Per-sample ||field(x_t, t) - u||^2.
Vector cfm_sample_losses(const model::FlowModel& model, const PathBatch& batch);
double cfm_loss(const model::FlowModel& model, const PathBatch& batch);
/// Mean loss; accumulates its parameter gradients into the model.
double cfm_loss_and_grad(model::FlowModel& model, const PathBatch& batch);

struct TrainConfig {
  int batch_size = 256;
  int steps = 20000;
  nn::AdamConfig adam;
  std::uint64_t seed = 0;
  int eval_every = 500;
  /// 0 uses every row of the evaluation split.
  int n_eval_pairs = 0;
  std::uint64_t eval_seed = 1234;
  bool deterministic = true;
  /// Batch fan-out; results are reduced in chunk order when deterministic.
  int threads = 1;
  model::ModelOptions model_options;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
  /// `key = value` lines, '#' comments.
  static TrainConfig from_key_values(std::string_view text);
  static TrainConfig from_key_values(std::string_view text, TrainConfig base);
};

struct EvalSet {
  PathBatch batch;
  std::string digest;
};

/// Frozen (t, x0, x1) triples; x1 walks the dataset rows in order.
EvalSet make_eval_set(const data::Dataset& ds, int n_pairs, std::uint64_t seed);
double evaluate(const model::FlowModel& model, const EvalSet& eval);
double evaluate(const model::FlowModel& model, const data::Dataset& ds, int n_pairs, std::uint64_t seed);

struct EvalRecord {
  std::int64_t step = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double wall_seconds = 0.0;
};

struct RunMetrics {
  std::vector<double> train_curve;
  std::vector<EvalRecord> evals;
  double initial_train = 0.0;
  double final_train = 0.0;
  double final_test = 0.0;
  double wall_seconds = 0.0;
  std::string train_eval_digest;
  std::string test_eval_digest;

  nlohmann::json to_json() const;
  static RunMetrics from_json(const nlohmann::json& j);
};

struct StepRecord {
  std::int64_t step = 0;
  double train_loss = 0.0;
  std::optional<double> test_loss;
};

using StepCallback = std::function<void(const StepRecord&)>;

/// Runs config.steps Adam updates over shuffled minibatches. On a non-finite
/// loss throws Error(numeric); the model then still holds the last good
/// parameters.
RunMetrics train(model::FlowModel& model, const data::Dataset& train_set, const data::Dataset& test_set,
                 const TrainConfig& config, const StepCallback& on_step = {});

}  // namespace hgfm::train
