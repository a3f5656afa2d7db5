#include "hgfm/ode.hpp"

#include "hgfm/error.hpp"
#include "hgfm/flow_field.hpp"
#include "hgfm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

namespace hgfm::ode {

namespace {
constexpr std::uint64_t kPriorTag = 0x7072696full;
constexpr int kChunk = 512;

void check_state(const double* data, std::size_t size, int step) {
  for (std::size_t i = 0; i < size; ++i)
    require(std::isfinite(data[i]), ErrorCode::numeric,
            "integrator: non-finite state at step " + std::to_string(step));
}
}  // namespace

std::string_view to_string(Method m) noexcept { return m == Method::euler ? "euler" : "rk4"; }

Method parse_method(std::string_view name) {
  if (name == "euler") return Method::euler;
  if (name == "rk4") return Method::rk4;
  fail(ErrorCode::invalid_argument, "unknown integrator '" + std::string(name) + "' (expected euler or rk4)");
}

std::vector<double> integrate(const Field& field, std::span<const double> x0, int steps, Method method,
                              std::vector<std::vector<double>>* trajectory) {
  require(steps >= 1, ErrorCode::invalid_argument, "integrator: steps must be >= 1");
  const std::size_t n = x0.size();
  const double h = 1.0 / steps;
  std::vector<double> x(x0.begin(), x0.end()), k1(n), k2(n), k3(n), k4(n), tmp(n);
  check_state(x.data(), n, 0);
  if (trajectory) {
    trajectory->clear();
    trajectory->push_back(x);
  }
  for (int s = 0; s < steps; ++s) {
    const double t = s * h;
    field(x, t, k1);
    if (method == Method::euler) {
      for (std::size_t i = 0; i < n; ++i) x[i] += h * k1[i];
    } else {
      for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
      field(tmp, t + 0.5 * h, k2);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
      field(tmp, t + 0.5 * h, k3);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
      field(tmp, t + h, k4);
      for (std::size_t i = 0; i < n; ++i) x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    check_state(x.data(), n, s + 1);
    if (trajectory) trajectory->push_back(x);
  }
  return x;
}

nn::Matrix integrate_batch(const BatchField& field, nn::Matrix x, int steps, Method method) {
  require(steps >= 1, ErrorCode::invalid_argument, "integrator: steps must be >= 1");
  const double h = 1.0 / steps;
  check_state(x.data(), static_cast<std::size_t>(x.size()), 0);
  for (int s = 0; s < steps; ++s) {
    const double t = s * h;
    const nn::Matrix k1 = field(x, t);
    if (method == Method::euler) {
      x += h * k1;
    } else {
      const nn::Matrix k2 = field(x + 0.5 * h * k1, t + 0.5 * h);
      const nn::Matrix k3 = field(x + 0.5 * h * k2, t + 0.5 * h);
      const nn::Matrix k4 = field(x + h * k3, t + h);
      x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    check_state(x.data(), static_cast<std::size_t>(x.size()), s + 1);
  }
  return x;
}

std::vector<double> prior_sample(int n, std::uint64_t seed, std::uint64_t index) {
  Rng rng(stream_seed(seed, kPriorTag, index));
  std::vector<double> x(static_cast<std::size_t>(n));
  for (auto& v : x) v = rng.normal();
  return x;
}

std::vector<double> generate(const model::FlowModel& model, int n_samples, std::uint64_t seed,
                             GenerateOptions options) {
  require(n_samples >= 0, ErrorCode::invalid_argument, "generate: n_samples must be >= 0");
  require(options.threads >= 1, ErrorCode::invalid_argument, "generate: threads must be >= 1");
  const int n = model.n();
  std::vector<double> out(static_cast<std::size_t>(n_samples) * static_cast<std::size_t>(n));

  const BatchField field = [&](const nn::Matrix& x, double t) {
    return flow::evaluate_field(model, x, nn::Vector::Constant(x.cols(), t));
  };
  auto run_chunk = [&](int start) {
    const int count = std::min(kChunk, n_samples - start);
    nn::Matrix x0(n, count);
    for (int b = 0; b < count; ++b) {
      const auto p = prior_sample(n, seed, static_cast<std::uint64_t>(start + b));
      for (int i = 0; i < n; ++i) x0(i, b) = p[static_cast<std::size_t>(i)];
    }
    const nn::Matrix x1 = integrate_batch(field, std::move(x0), options.steps, options.method);
    for (int b = 0; b < count; ++b)
      for (int i = 0; i < n; ++i)
        out[static_cast<std::size_t>(start + b) * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)] = x1(i, b);
  };

  std::vector<int> starts;
  for (int s = 0; s < n_samples; s += kChunk) starts.push_back(s);
  if (options.threads == 1 || starts.size() <= 1) {
    for (int s : starts) run_chunk(s);
    return out;
  }
  const auto workers_n = std::min<std::size_t>(static_cast<std::size_t>(options.threads), starts.size());
  std::vector<std::exception_ptr> errors(workers_n);
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < workers_n; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < starts.size(); c += workers_n) run_chunk(starts[c]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace hgfm::ode
