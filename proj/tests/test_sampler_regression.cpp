// Frozen sample-quality bounds on a trained N = 3 smoke model.

#include "hgfm/ode.hpp"
#include "hgfm/training.hpp"

#include <doctest.h>

#include <cmath>

using namespace hgfm;

namespace {

const model::FlowModel& smoke_model() {
  static const model::FlowModel trained = [] {
    auto spec = data::GmmSpec::for_dimension(3, 0);
    spec.n_train = 2000;
    spec.n_test = 500;
    const auto tr = data::sample_dataset(spec, data::Split::train);
    const auto te = data::sample_dataset(spec, data::Split::test);
    auto m = model::build_baseline(model::Variant::plain, 3, 0);
    train::TrainConfig c;
    c.steps = 2000;
    train::train(m, tr, te, c);
    return m;
  }();
  return trained;
}

}  // namespace

TEST_SUITE("sampler_regression") {
  TEST_CASE("generated samples concentrate near the mixture means") {
    constexpr int kSamples = 1000;
    constexpr double kFraction = 0.60;
    const double radius = 3.0 * std::sqrt(0.5 * 3);
    const auto spec = data::GmmSpec::for_dimension(3, 0);
    std::vector<std::vector<double>> means;
    for (int k = 0; k < spec.k; ++k) means.push_back(data::component_mean(spec, k));

    const auto s = ode::generate(smoke_model(), kSamples, 0);
    int near = 0;
    for (int i = 0; i < kSamples; ++i) {
      double best = INFINITY;
      for (const auto& mu : means) {
        double d2 = 0.0;
        for (int j = 0; j < 3; ++j) d2 += std::pow(s[static_cast<std::size_t>(i * 3 + j)] - mu[static_cast<std::size_t>(j)], 2);
        best = std::min(best, d2);
      }
      near += std::sqrt(best) <= radius;
    }
    const double fraction = static_cast<double>(near) / kSamples;
    CAPTURE(fraction);
    CHECK(fraction >= kFraction);
  }

  TEST_CASE("Euler and RK4 agree at 200 steps") {
    constexpr double kRelTol = 1e-2;
    const auto rk = ode::generate(smoke_model(), 1000, 0, {200, ode::Method::rk4, 1});
    const auto eu = ode::generate(smoke_model(), 1000, 0, {200, ode::Method::euler, 1});
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < rk.size(); ++i) {
      diff += std::pow(eu[i] - rk[i], 2);
      norm += rk[i] * rk[i];
    }
    const double rel = std::sqrt(diff / norm);
    CAPTURE(rel);
    CHECK(rel <= kRelTol);
  }
}
