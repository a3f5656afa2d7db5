// Command-line front end over the hgfm C interface.

#include "hgfm/hgfm.h"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Failure {
  hgfm_status status;
  std::string message;
};

void check(hgfm_status s, const std::string& what) {
  if (s != HGFM_OK) throw Failure{s, what + ": " + hgfm_last_error()};
}

std::string take(char* s) {
  std::string out = s ? s : "";
  hgfm_string_free(s);
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Failure{HGFM_ERR_IO, "cannot read " + p.string()};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw Failure{HGFM_ERR_IO, "cannot write " + p.string()};
  }
  fs::rename(tmp, p);
}

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  ~Handle() { Free(p); }
};
using Model = Handle<hgfm_model, hgfm_model_free>;
using Data = Handle<hgfm_dataset, hgfm_dataset_free>;
using Algebra = Handle<hgfm_algebra, hgfm_algebra_free>;

int exit_for(hgfm_status s) { return s == HGFM_ERR_INVALID_ARGUMENT ? 64 : 1; }

// ---------------------------------------------------------------------------

struct GenDataArgs {
  int n = 3;
  std::uint64_t seed = 0;
  std::string out;
  bool csv = false;
  std::string overrides;
};

int gen_data(const GenDataArgs& a) {
  check(hgfm_generate_data(a.n, a.seed, a.out.c_str(), a.csv ? 1 : 0, a.overrides.empty() ? nullptr : a.overrides.c_str()),
        "gen-data");
  std::cout << read_file(fs::path(a.out) / "spec.json") << '\n';
  return 0;
}

struct TrainArgs {
  std::string model;
  std::string data;
  std::string config;
  std::string out;
  bool quiet = false;
};

struct TrainLog {
  std::ofstream* jsonl;
  bool quiet;
};

void on_step(int64_t step, double train_loss, double test_loss, void* user) {
  auto* log = static_cast<TrainLog*>(user);
  nlohmann::json line = {{"step", step}, {"train_loss", train_loss}};
  line["test_loss"] = std::isnan(test_loss) ? nlohmann::json() : nlohmann::json(test_loss);
  *log->jsonl << line.dump() << '\n';
  if (!std::isnan(test_loss)) {
    log->jsonl->flush();
    if (!log->quiet) std::fprintf(stderr, "step %lld  train %.6g  test %.6g\n", static_cast<long long>(step), train_loss, test_loss);
  }
}

int train(const TrainArgs& a) {
  const std::string text = a.config.empty() ? std::string{} : read_file(a.config);
  const std::string config = take([&] {
    char* out = nullptr;
    check(hgfm_config_parse(text.c_str(), &out), "config " + a.config);
    return out;
  }());
  const auto cj = nlohmann::json::parse(config);
  const nlohmann::json options = {{"hidden_width", cj.at("hidden_width")},
                                  {"direction_net", cj.at("direction_net")},
                                  {"two_field", cj.at("two_field")}};

  Data train_set, test_set;
  check(hgfm_dataset_load((fs::path(a.data) / "train.bin").c_str(), &train_set.p), "train split");
  check(hgfm_dataset_load((fs::path(a.data) / "test.bin").c_str(), &test_set.p), "test split");
  int rows = 0, n = 0;
  check(hgfm_dataset_shape(train_set.p, &rows, &n), "dataset");

  Model model;
  check(hgfm_model_create(a.model.c_str(), n, cj.at("seed").get<std::uint64_t>(), options.dump().c_str(), &model.p),
        "model");
  std::size_t params = 0;
  check(hgfm_model_info(model.p, nullptr, &params), "model");

  fs::create_directories(a.out);
  const fs::path out(a.out);
  std::ofstream jsonl(out / "metrics.jsonl");
  TrainLog log{&jsonl, a.quiet};
  if (!a.quiet) std::fprintf(stderr, "training %s on N=%d (%d rows, %zu parameters)\n", a.model.c_str(), n, rows, params);

  char* metrics = nullptr;
  const hgfm_status s = hgfm_train(model.p, train_set.p, test_set.p, config.c_str(), on_step, &log, &metrics);
  jsonl.flush();
  if (s != HGFM_OK) {
    const std::string msg = hgfm_last_error();
    // The model still holds the parameters of the last finite step.
    hgfm_model_save(model.p, (out / "last_good.ckpt").c_str(), -1);
    throw Failure{s, "train: " + msg + " (last good parameters in " + (out / "last_good.ckpt").string() + ")"};
  }
  auto mj = nlohmann::json::parse(take(metrics));
  check(hgfm_model_save(model.p, (out / "model.ckpt").c_str(), cj.at("steps").get<std::int64_t>()), "checkpoint");

  nlohmann::json summary = {{"variant", a.model},          {"n", n},
                            {"params", params},            {"config", cj},
                            {"initial_train", mj["initial_train"]}, {"final_train", mj["final_train"]},
                            {"final_test", mj["final_test"]},       {"wall_seconds", mj["wall_seconds"]},
                            {"train_eval_digest", mj["train_eval_digest"]},
                            {"test_eval_digest", mj["test_eval_digest"]}};
  write_file(out / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << '\n';
  return 0;
}

struct SampleArgs {
  std::string ckpt;
  int n = 1000;
  int steps = 100;
  std::uint64_t seed = 0;
  std::string method = "rk4";
  std::string out;
};

int sample(const SampleArgs& a) {
  Model model;
  check(hgfm_model_load(a.ckpt.c_str(), &model.p, nullptr), "checkpoint");
  int dim = 0;
  check(hgfm_model_info(model.p, &dim, nullptr), "model");
  std::vector<double> points(static_cast<std::size_t>(a.n) * static_cast<std::size_t>(dim));
  check(hgfm_sample(model.p, a.n, a.steps, a.seed, a.method.c_str(), points.data()), "sample");
  const nlohmann::json meta = {{"checkpoint", a.ckpt}, {"steps", a.steps}, {"seed", a.seed}, {"method", a.method}};
  check(hgfm_save_points(a.out.c_str(), dim, points.data(), static_cast<std::size_t>(a.n), meta.dump().c_str()),
        "write samples");
  std::fprintf(stderr, "wrote %d samples of dimension %d to %s\n", a.n, dim, a.out.c_str());
  return 0;
}

struct RunArgs {
  std::string plan;
  std::string out;
};

void print_log(const char* message, void*) { std::fprintf(stderr, "%s\n", message); }

int run(const RunArgs& a) {
  const std::string plan = read_file(a.plan);
  char* report = nullptr;
  int code = 0;
  check(hgfm_run_experiment(plan.c_str(), a.out.empty() ? nullptr : a.out.c_str(), print_log, nullptr, &report, &code),
        "run");
  const std::string rj = take(report);
  char* md = nullptr;
  check(hgfm_report_render(rj.c_str(), "md", &md), "report");
  std::cout << take(md);
  return code;
}

struct ReportArgs {
  std::string in;
  std::string format = "md";
  std::string out;
};

int report(const ReportArgs& a) {
  fs::path src(a.in);
  if (fs::is_directory(src)) src /= "report.json";
  const std::string rj = read_file(src);
  char* text = nullptr;
  check(hgfm_report_render(rj.c_str(), a.format.c_str(), &text), "report");
  const std::string rendered = take(text);
  if (a.out.empty())
    std::cout << rendered;
  else
    write_file(a.out, rendered);
  const auto j = nlohmann::json::parse(rj);
  for (const auto& c : j.at("cells"))
    if (!c.at("ok").get<bool>()) return 2;
  return 0;
}

struct DescribeArgs {
  std::string model = "hgfm";
  int n = 3;
  int hidden_width = 0;
  bool direction_net = false;
  bool two_field = false;
};

int describe(const DescribeArgs& a) {
  const nlohmann::json options = {
      {"hidden_width", a.hidden_width}, {"direction_net", a.direction_net}, {"two_field", a.two_field}};
  char* out = nullptr;
  check(hgfm_model_describe(a.model.c_str(), a.n, options.dump().c_str(), &out), "describe");
  std::cout << take(out) << '\n';
  return 0;
}

struct AlgebraArgs {
  int n = 3;
  bool check = false;
  int trials = 200;
  double tol = 1e-10;
  std::uint64_t seed = 0;
};

int algebra(const AlgebraArgs& a) {
  Algebra alg;
  check(hgfm_algebra_two_term(a.n, &alg.p), "algebra");
  if (!a.check) {
    std::cout << take([&] {
      char* out = nullptr;
      check(hgfm_algebra_to_json(alg.p, &out), "algebra");
      return out;
    }()) << '\n';
    return 0;
  }
  int failures = 0;
  for (int k = 1; k <= 4; ++k) {
    double skew = 0.0, jac = 0.0;
    int skew_ok = 0, jac_ok = 0;
    check(hgfm_algebra_check_skew(alg.p, k, a.trials, a.tol, a.seed, &skew, &skew_ok), "check_skew");
    check(hgfm_algebra_check_jacobi(alg.p, k, a.trials, a.tol, a.seed, &jac, &jac_ok), "check_jacobi");
    std::printf("k=%d  skew %-4s %.3e  jacobi %-4s %.3e\n", k, skew_ok ? "ok" : "FAIL", skew, jac_ok ? "ok" : "FAIL", jac);
    failures += (skew_ok ? 0 : 1) + (jac_ok ? 0 : 1);
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Higher gauge flow models: data, training, sampling and benchmarks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(hgfm_version()));

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Generate the Gaussian-mixture train/test splits");
  gen->add_option("--n", gd.n, "Dimension N")->required()->check(CLI::Range(3, 32));
  gen->add_option("--seed", gd.seed, "Dataset seed")->required();
  gen->add_option("--out", gd.out, "Output directory")->required();
  gen->add_flag("--csv", gd.csv, "Also write train.csv and test.csv");
  gen->add_option("--overrides", gd.overrides, "JSON object of spec overrides (k, n_train, n_test, spread, cov_scale)");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train one model variant");
  tr->add_option("--model", ta.model, "plain | gauge | hgfm")->required()->check(CLI::IsMember({"plain", "gauge", "hgfm"}));
  tr->add_option("--data", ta.data, "Directory with train.bin and test.bin")->required()->check(CLI::ExistingDirectory);
  tr->add_option("--config", ta.config, "key = value config file")->check(CLI::ExistingFile);
  tr->add_option("--out", ta.out, "Output directory")->required();
  tr->add_flag("--quiet", ta.quiet);

  SampleArgs sa;
  auto* sm = app.add_subcommand("sample", "Generate samples from a checkpoint");
  sm->add_option("--ckpt", sa.ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  sm->add_option("--n", sa.n, "Number of samples")->required()->check(CLI::NonNegativeNumber);
  sm->add_option("--steps", sa.steps, "Integrator steps")->check(CLI::PositiveNumber);
  sm->add_option("--seed", sa.seed, "Prior seed");
  sm->add_option("--method", sa.method, "rk4 | euler")->check(CLI::IsMember({"rk4", "euler"}));
  sm->add_option("--out", sa.out, "Output file")->required();

  RunArgs ra;
  auto* rn = app.add_subcommand("run", "Run a benchmark plan");
  rn->add_option("--plan", ra.plan, "Plan JSON")->required()->check(CLI::ExistingFile);
  rn->add_option("--out", ra.out, "Results directory (overrides the plan)");

  ReportArgs rp;
  auto* rep = app.add_subcommand("report", "Render a benchmark report");
  rep->add_option("--in", rp.in, "Results directory or report.json")->required()->check(CLI::ExistingPath);
  rep->add_option("--format", rp.format, "json | csv | md")->check(CLI::IsMember({"json", "csv", "md"}));
  rep->add_option("--out", rp.out, "Write to file instead of stdout");

  DescribeArgs da;
  auto* ds = app.add_subcommand("describe", "Print the network table of a variant");
  ds->add_option("--model", da.model, "plain | gauge | hgfm")->check(CLI::IsMember({"plain", "gauge", "hgfm"}));
  ds->add_option("--n", da.n, "Dimension N")->check(CLI::Range(3, 32));
  ds->add_option("--hidden-width", da.hidden_width, "Hidden width (0 = width rule)");
  ds->add_flag("--direction-net", da.direction_net);
  ds->add_flag("--two-field", da.two_field);

  AlgebraArgs aa;
  auto* al = app.add_subcommand("algebra", "Dump or verify the two-term algebra on so(N)");
  al->add_option("--n", aa.n, "Dimension N")->check(CLI::Range(3, 32));
  al->add_flag("--check", aa.check, "Run the skew-symmetry and Jacobi checks");
  al->add_option("--trials", aa.trials);
  al->add_option("--tol", aa.tol);
  al->add_option("--seed", aa.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return gen_data(gd);
    if (*tr) return train(ta);
    if (*sm) return sample(sa);
    if (*rn) return run(ra);
    if (*rep) return report(rp);
    if (*ds) return describe(da);
    if (*al) return algebra(aa);
  } catch (const Failure& f) {
    std::fprintf(stderr, "error (%s): %s\n", hgfm_status_name(f.status), f.message.c_str());
    return exit_for(f.status);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
