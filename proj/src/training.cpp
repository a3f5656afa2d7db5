#include "hgfm/training.hpp"

#include "hgfm/binary_io.hpp"
#include "hgfm/error.hpp"
#include "hgfm/flow_field.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace hgfm::train {

using model::FlowModel;

namespace {
constexpr std::uint64_t kPathTag = 0x70617468ull;
constexpr std::uint64_t kShuffleTag = 0x73687566ull;
constexpr std::uint64_t kEvalTag = 0x6576616cull;
constexpr Eigen::Index kEvalChunk = 1024;
}  // namespace

PathBatch make_path(const Matrix& x0, const Matrix& x1, const Vector& t) {
  require(x0.rows() == x1.rows() && x0.cols() == x1.cols() && t.size() == x1.cols(), ErrorCode::dimension_mismatch,
          "path: x0, x1 and t shapes disagree");
  require(x1.cols() > 0, ErrorCode::invalid_argument, "path: empty batch");
  PathBatch p;
  p.t = t;
  p.x0 = x0;
  p.x1 = x1;
  p.xt = x0.array().rowwise() * (1.0 - t.array()).transpose() + x1.array().rowwise() * t.array().transpose();
  p.u = x1 - x0;
  return p;
}

PathBatch sample_path(Rng& rng, const Matrix& x1) {
  require(x1.cols() > 0, ErrorCode::invalid_argument, "path: empty batch");
  Vector t(x1.cols());
  Matrix x0(x1.rows(), x1.cols());
  for (Eigen::Index b = 0; b < x1.cols(); ++b) {
    t(b) = rng.uniform();
    for (Eigen::Index i = 0; i < x1.rows(); ++i) x0(i, b) = rng.normal();
  }
  return make_path(x0, x1, t);
}

namespace {

PathBatch slice(const PathBatch& p, Eigen::Index start, Eigen::Index count) {
  PathBatch s;
  s.t = p.t.segment(start, count);
  s.x0 = p.x0.middleCols(start, count);
  s.x1 = p.x1.middleCols(start, count);
  s.xt = p.xt.middleCols(start, count);
  s.u = p.u.middleCols(start, count);
  return s;
}

void check_finite(double loss) {
  require(std::isfinite(loss), ErrorCode::numeric, "cfm loss is not finite (" + std::to_string(loss) + ")");
}

// Sum of squared errors over the batch; gradients of sum / denom accumulated.
double accumulate_loss(FlowModel& model, const PathBatch& batch, double denom) {
  auto tape = flow::field_forward(model, batch.xt, batch.t);
  const Matrix residual = tape.field - batch.u;
  const double sse = residual.squaredNorm();
  check_finite(sse);
  flow::field_backward(model, tape, (2.0 / denom) * residual);
  return sse;
}

}  // namespace

Vector cfm_sample_losses(const FlowModel& model, const PathBatch& batch) {
  Vector out(batch.size());
  for (Eigen::Index start = 0; start < batch.size(); start += kEvalChunk) {
    const Eigen::Index count = std::min(kEvalChunk, batch.size() - start);
    const Matrix f = flow::evaluate_field(model, batch.xt.middleCols(start, count), batch.t.segment(start, count));
    out.segment(start, count) = (f - batch.u.middleCols(start, count)).colwise().squaredNorm().transpose();
  }
  return out;
}

double cfm_loss(const FlowModel& model, const PathBatch& batch) {
  require(batch.size() > 0, ErrorCode::invalid_argument, "cfm loss: empty batch");
  const double loss = cfm_sample_losses(model, batch).mean();
  check_finite(loss);
  return loss;
}

double cfm_loss_and_grad(FlowModel& model, const PathBatch& batch) {
  require(batch.size() > 0, ErrorCode::invalid_argument, "cfm loss: empty batch");
  const auto b = static_cast<double>(batch.size());
  return accumulate_loss(model, batch, b) / b;
}

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  require(batch_size >= 1, ErrorCode::invalid_argument, "train config: batch_size must be >= 1");
  require(steps >= 0, ErrorCode::invalid_argument, "train config: steps must be >= 0");
  require(eval_every >= 1, ErrorCode::invalid_argument, "train config: eval_every must be >= 1");
  require(n_eval_pairs >= 0, ErrorCode::invalid_argument, "train config: n_eval_pairs must be >= 0");
  require(threads >= 1, ErrorCode::invalid_argument, "train config: threads must be >= 1");
  require(adam.lr > 0.0 && adam.eps > 0.0, ErrorCode::invalid_argument, "train config: lr and eps must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"steps", steps},
          {"lr", adam.lr},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"eps", adam.eps},
          {"seed", seed},
          {"eval_every", eval_every},
          {"n_eval_pairs", n_eval_pairs},
          {"eval_seed", eval_seed},
          {"deterministic", deterministic},
          {"threads", threads},
          {"hidden_width", model_options.hidden_width},
          {"direction_net", model_options.direction_net},
          {"two_field", model_options.two_field}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  require(j.is_object(), ErrorCode::format, "train config: expected an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "steps") c.steps = value.get<int>();
      else if (key == "lr") c.adam.lr = value.get<double>();
      else if (key == "beta1") c.adam.beta1 = value.get<double>();
      else if (key == "beta2") c.adam.beta2 = value.get<double>();
      else if (key == "eps") c.adam.eps = value.get<double>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "eval_every") c.eval_every = value.get<int>();
      else if (key == "n_eval_pairs") c.n_eval_pairs = value.get<int>();
      else if (key == "eval_seed") c.eval_seed = value.get<std::uint64_t>();
      else if (key == "deterministic") c.deterministic = value.get<bool>();
      else if (key == "threads") c.threads = value.get<int>();
      else if (key == "hidden_width") c.model_options.hidden_width = value.get<int>();
      else if (key == "direction_net") c.model_options.direction_net = value.get<bool>();
      else if (key == "two_field") c.model_options.two_field = value.get<bool>();
      else fail(ErrorCode::format, "train config: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::format, "train config: bad value for '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_key_values(std::string_view text) { return from_key_values(text, TrainConfig{}); }

TrainConfig TrainConfig::from_key_values(std::string_view text, TrainConfig base) {
  nlohmann::json j = nlohmann::json::object();
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return std::string{};
    return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::format, "config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value == "true" || value == "false") {
      j[key] = value == "true";
      continue;
    }
    try {
      std::size_t used = 0;
      if (value.find_first_of(".eE") != std::string::npos) {
        j[key] = std::stod(value, &used);
      } else {
        j[key] = std::stoull(value, &used);
      }
      require(used == value.size(), ErrorCode::format, "");
    } catch (const std::exception&) {
      fail(ErrorCode::format, "config line " + std::to_string(lineno) + ": bad value '" + value + "' for " + key);
    }
  }
  return from_json(j, base);
}

// ---------------------------------------------------------------------------
// Evaluation

EvalSet make_eval_set(const data::Dataset& ds, int n_pairs, std::uint64_t seed) {
  require(ds.rows > 0, ErrorCode::invalid_argument, "eval set: empty dataset");
  const int count = n_pairs > 0 ? n_pairs : ds.rows;
  Matrix x0(ds.n, count), x1(ds.n, count);
  Vector t(count);
  for (int i = 0; i < count; ++i) {
    Rng rng(stream_seed(seed, kEvalTag, static_cast<std::uint64_t>(i)));
    t(i) = rng.uniform();
    const auto row = ds.row(i % ds.rows);
    for (int j = 0; j < ds.n; ++j) {
      x0(j, i) = rng.normal();
      x1(j, i) = row[static_cast<std::size_t>(j)];
    }
  }
  EvalSet e;
  e.batch = make_path(x0, x1, t);
  std::vector<double> stream(t.data(), t.data() + t.size());
  stream.insert(stream.end(), x0.data(), x0.data() + x0.size());
  stream.insert(stream.end(), x1.data(), x1.data() + x1.size());
  e.digest = io::hex64(io::digest_doubles(stream));
  return e;
}

double evaluate(const FlowModel& model, const EvalSet& eval) { return cfm_loss(model, eval.batch); }

double evaluate(const FlowModel& model, const data::Dataset& ds, int n_pairs, std::uint64_t seed) {
  return evaluate(model, make_eval_set(ds, n_pairs, seed));
}

// ---------------------------------------------------------------------------
// Metrics

nlohmann::json RunMetrics::to_json() const {
  nlohmann::json evals_json = nlohmann::json::array();
  for (const auto& e : evals)
    evals_json.push_back(
        {{"step", e.step}, {"train_loss", e.train_loss}, {"test_loss", e.test_loss}, {"wall_seconds", e.wall_seconds}});
  return {{"train_curve", train_curve},
          {"evals", evals_json},
          {"initial_train", initial_train},
          {"final_train", final_train},
          {"final_test", final_test},
          {"wall_seconds", wall_seconds},
          {"train_eval_digest", train_eval_digest},
          {"test_eval_digest", test_eval_digest}};
}

RunMetrics RunMetrics::from_json(const nlohmann::json& j) {
  RunMetrics m;
  try {
    m.train_curve = j.at("train_curve").get<std::vector<double>>();
    for (const auto& e : j.at("evals"))
      m.evals.push_back({e.at("step").get<std::int64_t>(), e.at("train_loss").get<double>(),
                         e.at("test_loss").get<double>(), e.at("wall_seconds").get<double>()});
    m.initial_train = j.at("initial_train").get<double>();
    m.final_train = j.at("final_train").get<double>();
    m.final_test = j.at("final_test").get<double>();
    m.wall_seconds = j.at("wall_seconds").get<double>();
    m.train_eval_digest = j.at("train_eval_digest").get<std::string>();
    m.test_eval_digest = j.at("test_eval_digest").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("run metrics: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

class BatchGradient {
 public:
  BatchGradient(const TrainConfig& config) : config_(config) {}

  double operator()(FlowModel& model, const PathBatch& batch) {
    if (config_.threads <= 1 || batch.size() < config_.threads) return cfm_loss_and_grad(model, batch);
    const auto chunks = static_cast<std::size_t>(config_.threads);
    sync_replicas(model, chunks);

    const Eigen::Index total = batch.size();
    const auto denom = static_cast<double>(total);
    std::vector<double> sse(chunks, 0.0);
    std::vector<std::exception_ptr> errors(chunks);
    std::mutex reduce_mutex;
    auto params = model.params();
    auto reduce = [&](std::size_t k) {
      auto rp = replicas_[k].params();
      for (std::size_t i = 0; i < params.size(); ++i) params[i]->grad += rp[i]->grad;
    };

    std::vector<std::thread> workers;
    for (std::size_t k = 0; k < chunks; ++k) {
      workers.emplace_back([&, k] {
        try {
          const Eigen::Index start = total * static_cast<Eigen::Index>(k) / static_cast<Eigen::Index>(chunks);
          const Eigen::Index stop = total * static_cast<Eigen::Index>(k + 1) / static_cast<Eigen::Index>(chunks);
          replicas_[k].zero_grad();
          sse[k] = accumulate_loss(replicas_[k], slice(batch, start, stop - start), denom);
          if (!config_.deterministic) {
            std::lock_guard lock(reduce_mutex);
            reduce(k);
          }
        } catch (...) {
          errors[k] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    if (config_.deterministic)
      for (std::size_t k = 0; k < chunks; ++k) reduce(k);
    double sum = 0.0;
    for (double s : sse) sum += s;
    return sum / denom;
  }

 private:
  void sync_replicas(const FlowModel& model, std::size_t chunks) {
    if (replicas_.size() != chunks) replicas_.assign(chunks, model);
    const auto src = model.params();
    for (auto& r : replicas_) {
      auto dst = r.params();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i]->values = src[i]->values;
    }
  }

  const TrainConfig& config_;
  std::vector<FlowModel> replicas_;
};

}  // namespace

RunMetrics train(FlowModel& model, const data::Dataset& train_set, const data::Dataset& test_set,
                 const TrainConfig& config, const StepCallback& on_step) {
  config.validate();
  require(train_set.n == model.n() && test_set.n == model.n(), ErrorCode::dimension_mismatch,
          "train: dataset dimension " + std::to_string(train_set.n) + " does not match model N " +
              std::to_string(model.n()));
  require(train_set.rows > 0, ErrorCode::invalid_argument, "train: empty training set");

  using clock = std::chrono::steady_clock;
  const auto started = clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - started).count(); };

  RunMetrics metrics;
  const EvalSet train_eval = make_eval_set(train_set, config.n_eval_pairs, config.eval_seed);
  const EvalSet test_eval = make_eval_set(test_set, config.n_eval_pairs, config.eval_seed);
  metrics.train_eval_digest = train_eval.digest;
  metrics.test_eval_digest = test_eval.digest;
  metrics.initial_train = evaluate(model, train_eval);

  nn::Adam adam(config.adam);
  BatchGradient gradient(config);
  Rng path_rng(stream_seed(config.seed, kPathTag, 0));
  Rng shuffle_rng(stream_seed(config.seed, kShuffleTag, 0));

  const int batch = std::min(config.batch_size, train_set.rows);
  std::vector<int> order(static_cast<std::size_t>(train_set.rows));
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  model.zero_grad();
  Matrix x1(model.n(), batch);
  for (int step = 1; step <= config.steps; ++step) {
    for (int b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        for (std::size_t i = order.size() - 1; i > 0; --i)
          std::swap(order[i], order[static_cast<std::size_t>(shuffle_rng.below(i + 1))]);
        cursor = 0;
      }
      const auto row = train_set.row(order[cursor++]);
      for (int j = 0; j < model.n(); ++j) x1(j, b) = row[static_cast<std::size_t>(j)];
    }
    const PathBatch path = sample_path(path_rng, x1);
    double loss = 0.0;
    try {
      loss = gradient(model, path);
    } catch (const Error& e) {
      model.zero_grad();
      if (e.code() == ErrorCode::numeric)
        fail(ErrorCode::numeric, "training diverged at step " + std::to_string(step) + ": " + e.what());
      throw;
    }
    auto params = model.params();
    adam.step(params);
    metrics.train_curve.push_back(loss);

    StepRecord rec{step, loss, std::nullopt};
    if (step % config.eval_every == 0 || step == config.steps) {
      const double test_loss = evaluate(model, test_eval);
      metrics.evals.push_back({step, loss, test_loss, elapsed()});
      rec.test_loss = test_loss;
    }
    if (on_step) on_step(rec);
  }

  metrics.final_train = evaluate(model, train_eval);
  metrics.final_test = evaluate(model, test_eval);
  metrics.wall_seconds = elapsed();
  return metrics;
}

}  // namespace hgfm::train
