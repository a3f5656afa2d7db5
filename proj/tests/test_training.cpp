#include "hgfm/error.hpp"
#include "hgfm/training.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace hgfm;
using namespace hgfm::train;
using model::Variant;

namespace {

data::Dataset small_dataset(int rows, std::uint64_t seed, double spread = 25.0, data::Split split = data::Split::train) {
  auto spec = data::GmmSpec::for_dimension(3, seed);
  spec.spread = spread;
  spec.n_train = rows;
  spec.n_test = rows;
  return data::sample_dataset(spec, split);
}

nn::Matrix columns(const data::Dataset& ds, int count) {
  nn::Matrix x(ds.n, count);
  for (int b = 0; b < count; ++b)
    for (int i = 0; i < ds.n; ++i) x(i, b) = ds.row(b)[static_cast<std::size_t>(i)];
  return x;
}

std::vector<double> flat_params(const model::FlowModel& m) { return nn::flatten_values(m.params()); }

// Largest relative error between analytic and central-difference gradients
// over `per_net` random parameters of every network.
double keystone(model::FlowModel& m, const PathBatch& batch, int per_net, std::uint64_t seed) {
  m.zero_grad();
  cfm_loss_and_grad(m, batch);
  std::mt19937_64 rng(seed);
  constexpr double h = 1e-5;
  double worst = 0.0;
  for (auto& nw : m.networks()) {
    auto ps = nw.mlp.params();
    for (int s = 0; s < per_net; ++s) {
      auto* p = ps[rng() % ps.size()];
      const auto i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(p->values.size()));
      const double orig = p->values(i);
      p->values(i) = orig + h;
      const double up = cfm_loss(m, batch);
      p->values(i) = orig - h;
      const double down = cfm_loss(m, batch);
      p->values(i) = orig;
      const double fd = (up - down) / (2 * h);
      const double g = p->grad(i);
      const double denom = std::max({std::abs(g), std::abs(fd), std::numeric_limits<double>::min()});
      worst = std::max(worst, std::abs(g - fd) / denom);
    }
  }
  return worst;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("path endpoints and the hand example") {
    nn::Matrix x0(3, 3), x1(3, 3);
    x0 << 1, 0, 0, 2, 0, 0, 3, 0, 0;
    x1 << 4, 25, 7, 5, 0, 8, 6, 0, 9;
    nn::Vector t(3);
    t << 0.0, 0.5, 1.0;
    const auto p = make_path(x0, x1, t);
    CHECK(p.xt.col(0) == x0.col(0));
    CHECK(p.xt.col(2) == x1.col(2));
    CHECK(p.xt.col(1) == Eigen::Vector3d(12.5, 0, 0));
    CHECK(p.u.col(1) == Eigen::Vector3d(25, 0, 0));
    CHECK_THROWS_AS(make_path(x0, x1, nn::Vector::Zero(2)), Error);
    CHECK_THROWS_AS(make_path(nn::Matrix(3, 0), nn::Matrix(3, 0), nn::Vector(0)), Error);
  }

  TEST_CASE("sample_path draws t in [0, 1) and standard normal x0") {
    Rng rng(3);
    const nn::Matrix x1 = nn::Matrix::Zero(3, 20000);
    const auto p = sample_path(rng, x1);
    CHECK(p.t.minCoeff() >= 0.0);
    CHECK(p.t.maxCoeff() < 1.0);
    CHECK(std::abs(p.t.mean() - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / 20000));
    const double mean = p.x0.mean();
    const double var = (p.x0.array() - mean).square().sum() / (p.x0.size() - 1);
    CHECK(std::abs(mean) < 4.0 / std::sqrt(60000.0));
    CHECK(std::abs(var - 1.0) < 4.0 * std::sqrt(2.0 / 60000.0));
    CHECK((p.u - (p.x1 - p.x0)).cwiseAbs().maxCoeff() == 0.0);
  }

  TEST_CASE("cfm_loss: oracle stub, zero model and permutation invariance") {
    auto m = model::build_baseline(Variant::plain, 3, 1);
    // Constant field equal to a constant target gives zero loss.
    for (auto* p : m.params()) p->values.setZero();
    m.net(model::Role::field).bias(3).values << 25.0, 0.0, 0.0;
    nn::Matrix x0 = nn::Matrix::Random(3, 5), x1 = x0;
    x1.row(0).array() += 25.0;
    const auto stub = make_path(x0, x1, nn::Vector::LinSpaced(5, 0.0, 1.0));
    CHECK(cfm_loss(m, stub) == 0.0);

    for (auto* p : m.params()) p->values.setZero();
    nn::Matrix a = nn::Matrix::Zero(3, 1), b = nn::Matrix::Zero(3, 1);
    b(0, 0) = 25.0;
    CHECK(cfm_loss(m, make_path(a, b, nn::Vector::Constant(1, 0.5))) == 625.0);

    const auto real = model::build_hgfm(3, 2);
    Rng rng(4);
    const auto batch = sample_path(rng, nn::Matrix::Random(3, 9));
    std::vector<int> perm{3, 1, 4, 0, 8, 2, 7, 5, 6};
    nn::Matrix px0(3, 9), px1(3, 9);
    nn::Vector pt(9);
    for (int i = 0; i < 9; ++i) {
      px0.col(i) = batch.x0.col(perm[static_cast<std::size_t>(i)]);
      px1.col(i) = batch.x1.col(perm[static_cast<std::size_t>(i)]);
      pt(i) = batch.t(perm[static_cast<std::size_t>(i)]);
    }
    CHECK(cfm_loss(real, make_path(px0, px1, pt)) == doctest::Approx(cfm_loss(real, batch)).epsilon(1e-13));
  }

  TEST_CASE("gradient keystone at N = 3, hidden width 8") {
    auto batch_at = [](double spread) {
      const auto ds = small_dataset(64, 0, spread);
      Rng rng(1);
      return sample_path(rng, columns(ds, 16));
    };
    model::ModelOptions narrow;
    narrow.hidden_width = 8;
    const auto unit_scale = batch_at(1.0);
    for (auto v : {Variant::plain, Variant::gauge, Variant::hgfm}) {
      CAPTURE(model::to_string(v));
      auto m = model::build_model(v, 3, 5, narrow);
      CHECK(keystone(m, unit_scale, 30, 3) <= 1e-4);
    }
    // The two-field loss is quintic in the network outputs; smaller data keeps
    // central differences above the roundoff floor.
    const auto small_scale = batch_at(0.1);
    auto two = narrow;
    two.two_field = true;
    auto dir = narrow;
    dir.direction_net = true;
    for (const auto& o : {two, dir}) {
      CAPTURE(o.two_field);
      auto m = model::build_model(Variant::hgfm, 3, 5, o);
      CHECK(keystone(m, small_scale, 30, 3) <= 1e-4);
    }
  }

  TEST_CASE("config parsing") {
    const auto c = TrainConfig::from_key_values(
        "# smoke\nsteps = 50\nbatch_size=32\nlr = 5e-4\nseed = 9\n\ndeterministic = false\nhidden_width = 8  # narrow\n");
    CHECK(c.steps == 50);
    CHECK(c.batch_size == 32);
    CHECK(c.adam.lr == 5e-4);
    CHECK(c.seed == 9);
    CHECK_FALSE(c.deterministic);
    CHECK(c.model_options.hidden_width == 8);
    CHECK(c.eval_every == 500);
    CHECK(TrainConfig::from_json(c.to_json()).to_json() == c.to_json());
    CHECK_THROWS_AS(TrainConfig::from_key_values("bogus = 1"), Error);
    CHECK_THROWS_AS(TrainConfig::from_key_values("steps"), Error);
    CHECK_THROWS_AS(TrainConfig::from_key_values("steps = abc"), Error);
    CHECK_THROWS_AS(TrainConfig::from_key_values("batch_size = 0"), Error);
    CHECK_THROWS_AS(TrainConfig::from_key_values("lr = -1.0"), Error);
  }

  TEST_CASE("evaluation triples are frozen, paired and self-consistent") {
    const auto test = small_dataset(400, 1, 25.0, data::Split::test);
    const auto e1 = make_eval_set(test, 0, 1234), e2 = make_eval_set(test, 0, 1234);
    CHECK(e1.digest == e2.digest);
    CHECK(e1.batch.size() == 400);
    CHECK(make_eval_set(test, 50, 1234).batch.size() == 50);
    const auto m = model::build_hgfm(3, 1);
    CHECK(evaluate(m, e1) == evaluate(m, e2));
    CHECK(evaluate(m, test, 0, 1234) == evaluate(m, e1));

    const auto plain = model::build_baseline(Variant::plain, 3, 1);
    const auto ea = make_eval_set(test, 0, 1), eb = make_eval_set(test, 0, 2);
    CHECK(ea.digest != eb.digest);
    const auto la = cfm_sample_losses(plain, ea.batch), lb = cfm_sample_losses(plain, eb.batch);
    auto se = [](const nn::Vector& l) {
      const double m = l.mean();
      return std::sqrt((l.array() - m).square().sum() / (l.size() - 1) / l.size());
    };
    CHECK(la.mean() != lb.mean());
    CHECK(std::abs(la.mean() - lb.mean()) <= 3.0 * std::hypot(se(la), se(lb)));
  }

  TEST_CASE("zero steps leave the model bit-identical") {
    const auto tr = small_dataset(300, 2), te = small_dataset(100, 2, 25.0, data::Split::test);
    auto m = model::build_hgfm(3, 4);
    const auto before = flat_params(m);
    TrainConfig c;
    c.steps = 0;
    const auto metrics = train::train(m, tr, te, c);
    CHECK(flat_params(m) == before);
    CHECK(metrics.train_curve.empty());
    CHECK(metrics.final_train == metrics.initial_train);
  }

  TEST_CASE("deterministic runs reproduce loss curves bit for bit") {
    const auto tr = small_dataset(500, 3), te = small_dataset(200, 3, 25.0, data::Split::test);
    TrainConfig c;
    c.steps = 30;
    c.batch_size = 64;
    c.eval_every = 10;
    c.seed = 5;
    c.model_options.hidden_width = 16;
    auto run = [&](int threads) {
      auto cfg = c;
      cfg.threads = threads;
      auto m = model::build_model(Variant::gauge, 3, 1, cfg.model_options);
      std::vector<std::int64_t> steps;
      auto metrics = train::train(m, tr, te, cfg, [&](const StepRecord& r) { steps.push_back(r.step); });
      CHECK(steps.size() == 30);
      CHECK(std::is_sorted(steps.begin(), steps.end()));
      return std::make_pair(metrics, flat_params(m));
    };
    const auto [a, pa] = run(1);
    const auto [b, pb] = run(1);
    CHECK(a.train_curve == b.train_curve);
    CHECK(pa == pb);
    CHECK(a.evals.size() == 3);
    CHECK(a.evals[1].step == 20);
    const auto [c2, pc] = run(3);
    const auto [d2, pd] = run(3);
    CHECK(c2.train_curve == d2.train_curve);
    CHECK(pc == pd);
    for (std::size_t i = 0; i < a.train_curve.size(); ++i)
      CHECK(c2.train_curve[i] == doctest::Approx(a.train_curve[i]).epsilon(1e-6));
    const auto back = RunMetrics::from_json(a.to_json());
    CHECK(back.to_json() == a.to_json());
  }

  TEST_CASE("training reduces the loss of a plain model") {
    const auto tr = small_dataset(2000, 4), te = small_dataset(500, 4, 25.0, data::Split::test);
    auto m = model::build_baseline(Variant::plain, 3, 2);
    TrainConfig c;
    c.steps = 300;
    c.eval_every = 100;
    const auto metrics = train::train(m, tr, te, c);
    CHECK(metrics.final_train < 0.5 * metrics.initial_train);
    CHECK(metrics.final_test > 0.0);
  }

  TEST_CASE("non-finite loss aborts and keeps the last good parameters") {
    auto tr = small_dataset(64, 5);
    const auto te = small_dataset(64, 5, 25.0, data::Split::test);
    auto m = model::build_baseline(Variant::plain, 3, 2);
    TrainConfig c;
    c.steps = 3;
    c.batch_size = 64;
    c.n_eval_pairs = 8;
    // Poison rows that the evaluation set does not read.
    for (int i = 8; i < 64; ++i) tr.points[static_cast<std::size_t>(i) * 3] = std::numeric_limits<double>::quiet_NaN();
    const auto before = flat_params(m);
    try {
      train::train(m, tr, te, c);
      FAIL("expected divergence");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::numeric);
      CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
    CHECK(flat_params(m) == before);
  }

  TEST_CASE("dimension mismatch is rejected") {
    auto spec = data::GmmSpec::for_dimension(4, 0);
    spec.n_train = 10;
    spec.n_test = 10;
    const auto tr = data::sample_dataset(spec, data::Split::train), te = data::sample_dataset(spec, data::Split::test);
    auto m = model::build_hgfm(3, 1);
    CHECK_THROWS_AS(train::train(m, tr, te, TrainConfig{}), Error);
  }
}
