#pragma once

// Fixed-step explicit integration of dx/dt = f(x, t) over [0, 1].

#include "hgfm/models.hpp"
#include "hgfm/nn.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace hgfm::ode {

enum class Method { euler, rk4 };

std::string_view to_string(Method m) noexcept;
Method parse_method(std::string_view name);

/// Writes f(x, t) into out.
using Field = std::function<void(std::span<const double> x, double t, std::span<double> out)>;
/// Batched field: column b of x is one state.
using BatchField = std::function<nn::Matrix(const nn::Matrix& x, double t)>;

/// Returns x(1). When `trajectory` is given it receives steps + 1 states.
std::vector<double> integrate(const Field& field, std::span<const double> x0, int steps, Method method = Method::rk4,
                              std::vector<std::vector<double>>* trajectory = nullptr);

nn::Matrix integrate_batch(const BatchField& field, nn::Matrix x0, int steps, Method method = Method::rk4);

/// Prior draw of sample i: N standard normals from its own stream.
std::vector<double> prior_sample(int n, std::uint64_t seed, std::uint64_t index);

struct GenerateOptions {
  int steps = 100;
  Method method = Method::rk4;
  int threads = 1;
};

/// Row-major n_samples x N; row i starts from prior_sample(N, seed, i).
std::vector<double> generate(const model::FlowModel& model, int n_samples, std::uint64_t seed,
                             GenerateOptions options = {});

}  // namespace hgfm::ode
