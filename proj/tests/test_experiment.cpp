#include "hgfm/error.hpp"
#include "hgfm/experiment.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace hgfm;
using namespace hgfm::experiment;
using model::Variant;

namespace {

CellResult cell(int n, Variant v, std::uint64_t seed, double train, double test, bool ok = true) {
  CellResult c;
  c.n = n;
  c.variant = v;
  c.seed = seed;
  c.ok = ok;
  c.error = ok ? "" : "diverged";
  c.initial_train = 10 * train;
  c.final_train = train;
  c.final_test = test;
  c.params = model::count_params(v, n);
  c.data_digest = "d" + std::to_string(n) + "_" + std::to_string(seed);
  c.eval_digest = "e" + std::to_string(n) + "_" + std::to_string(seed);
  return c;
}

const ReportRow& row(const ComparisonReport& r, int n, Variant v) {
  for (const auto& x : r.rows)
    if (x.n == n && x.variant == v) return x;
  throw std::runtime_error("missing row");
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

ExperimentPlan tiny_plan(const std::filesystem::path& out) {
  ExperimentPlan plan;
  plan.out_dir = out;
  plan.data = {{"k", 30}, {"n_train", 120}, {"n_test", 60}};
  plan.train.steps = 12;
  plan.train.batch_size = 32;
  plan.train.eval_every = 6;
  plan.train.model_options.hidden_width = 8;
  plan.jobs = 2;
  return plan;
}

}  // namespace

TEST_SUITE("experiment") {
  TEST_CASE("normalization against hgfm") {
    const std::vector<CellResult> cells{
        cell(3, Variant::plain, 0, 3.0, 7.0),   cell(3, Variant::gauge, 0, 0.3, 0.9),
        cell(3, Variant::hgfm, 0, 1.7, 2.9),    cell(3, Variant::plain, 1, 5.0, 9.0),
        cell(3, Variant::gauge, 1, 0.5, 1.3),   cell(3, Variant::hgfm, 1, 1.9, 3.3),
    };
    const auto r = assemble_report(cells);
    REQUIRE(r.rows.size() == 3);
    const auto& h = row(r, 3, Variant::hgfm);
    CHECK(*h.train_norm == 1.0);
    CHECK(*h.test_norm == 1.0);
    CHECK(h.seeds == 2);
    CHECK(h.train == doctest::Approx(1.8).epsilon(1e-15));
    const auto& p = row(r, 3, Variant::plain);
    CHECK(std::abs(*p.train_norm - 4.0 / 1.8) <= 1e-12);
    CHECK(std::abs(*p.test_norm - 8.0 / 3.1) <= 1e-12);
    CHECK(p.params == 34051);
    CHECK(row(r, 3, Variant::gauge).params < h.params);
    REQUIRE(r.dims.size() == 1);
    CHECK(r.dims[0].verdict == Verdict::warn);
    CHECK(r.dims[0].paired);
    CHECK(r.complete());
    CHECK(exit_code(r) == 0);
  }

  TEST_CASE("pass verdict, unpaired digests and failed cells") {
    std::vector<CellResult> cells{cell(4, Variant::plain, 0, 3.0, 7.0), cell(4, Variant::gauge, 0, 2.0, 5.0),
                                  cell(4, Variant::hgfm, 0, 1.0, 2.0)};
    auto r = assemble_report(cells);
    CHECK(r.dims[0].verdict == Verdict::pass);
    cells[1].eval_digest = "other";
    CHECK_FALSE(assemble_report(cells).dims[0].paired);

    cells[1] = cell(4, Variant::gauge, 0, 0, 0, false);
    r = assemble_report(cells);
    CHECK_FALSE(row(r, 4, Variant::gauge).ok);
    CHECK(row(r, 4, Variant::gauge).error.find("diverged") != std::string::npos);
    CHECK(row(r, 4, Variant::plain).ok);
    CHECK(r.dims[0].verdict == Verdict::incomplete);
    CHECK_FALSE(r.complete());
    CHECK(exit_code(r) == 2);
    const auto csv = lines(render_report(r, Format::csv));
    CHECK(csv[2].rfind("4,gauge,FAILED,FAILED,", 0) == 0);
    CHECK(render_report(r, Format::md).find("FAILED: seed 0: diverged") != std::string::npos);

    cells[2] = cell(4, Variant::hgfm, 0, 0, 0, false);
    r = assemble_report(cells);
    CHECK_FALSE(row(r, 4, Variant::plain).train_norm.has_value());
  }

  TEST_CASE("report rendering contracts") {
    const ComparisonReport empty;
    CHECK(lines(render_report(empty, Format::csv)) ==
          std::vector<std::string>{"N,variant,train,test,train_norm,test_norm,params"});
    CHECK(lines(render_report(empty, Format::md)).size() == 2);
    const auto ej = nlohmann::json::parse(render_report(empty, Format::json));
    CHECK(ComparisonReport::from_json(ej).to_json() == ej);

    const auto r = assemble_report({cell(3, Variant::plain, 0, 3.0, 7.0), cell(3, Variant::gauge, 0, 0.3, 0.9),
                                    cell(3, Variant::hgfm, 0, 1.7, 2.9)});
    const auto j = r.to_json();
    CHECK(ComparisonReport::from_json(j).to_json() == j);
    const auto csv = lines(render_report(r, Format::csv));
    REQUIRE(csv.size() == 4);
    CHECK(csv[3].rfind("3,hgfm,1.7,2.9,1,1,", 0) == 0);

    test::TempDir dir("report");
    emit_report(r, Format::csv, dir / "nested/report.csv");
    std::ifstream in(dir / "nested/report.csv");
    std::string first;
    std::getline(in, first);
    CHECK(first == "N,variant,train,test,train_norm,test_norm,params");
    CHECK_THROWS_AS(parse_format("xlsx"), Error);
  }

  TEST_CASE("plan validation and JSON") {
    ExperimentPlan plan;
    plan.overrides[Variant::gauge] = {{"lr", 5e-4}};
    const auto back = ExperimentPlan::from_json(plan.to_json());
    CHECK(back.to_json() == plan.to_json());
    CHECK(back.config_for(Variant::gauge, 7).adam.lr == 5e-4);
    CHECK(back.config_for(Variant::gauge, 7).seed == 7);
    CHECK(back.config_for(Variant::plain, 7).adam.lr == 1e-3);

    auto bad = plan;
    bad.dims = {2};
    CHECK_THROWS_AS(bad.validate(), Error);
    bad.dims = {33};
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = plan;
    bad.seeds.clear();
    CHECK_THROWS_AS(bad.validate(), Error);
    auto j = plan.to_json();
    j["colour"] = "blue";
    CHECK_THROWS_AS(ExperimentPlan::from_json(j), Error);
  }

  TEST_CASE("run_experiment: paired cells, cache reuse and failure isolation") {
    test::TempDir dir("experiment");
    const auto plan = tiny_plan(dir.path());
    std::vector<std::string> log;
    const auto first = run_experiment(plan, [&](const std::string& m) { log.push_back(m); });
    REQUIRE(first.rows.size() == 3);
    CHECK(first.complete());
    CHECK(*row(first, 3, Variant::hgfm).test_norm == 1.0);
    CHECK(row(first, 3, Variant::plain).params == 34051);
    CHECK(first.dims[0].paired);
    CHECK(first.dims[0].verdict != Verdict::incomplete);
    for (const char* f : {"plan.json", "report.json", "report.csv", "report.md", "data/N3_s0/train.bin",
                          "runs/N3_s0_hgfm/model.ckpt"})
      CHECK(std::filesystem::exists(dir / f));

    log.clear();
    const auto second = run_experiment(plan, [&](const std::string& m) { log.push_back(m); });
    CHECK(second.to_json() == first.to_json());
    CHECK(std::count_if(log.begin(), log.end(), [](const auto& m) { return m.rfind("cached", 0) == 0; }) == 3);

    // A changed budget invalidates the run cache but not the dataset.
    auto longer = plan;
    longer.train.steps = 13;
    log.clear();
    const auto third = run_experiment(longer, [&](const std::string& m) { log.push_back(m); });
    CHECK(std::count_if(log.begin(), log.end(), [](const auto& m) { return m.rfind("training", 0) == 0; }) == 3);
    CHECK(std::none_of(log.begin(), log.end(), [](const auto& m) { return m.rfind("generating", 0) == 0; }));
    CHECK(third.cells[0].data_digest == first.cells[0].data_digest);

    // Block one cell's output directory: only that cell fails.
    test::TempDir dir2("experiment_fail");
    auto blocked = tiny_plan(dir2.path());
    std::filesystem::create_directories(dir2 / "runs");
    std::ofstream(dir2 / "runs/N3_s0_gauge") << "not a directory";
    const auto partial = run_experiment(blocked);
    CHECK_FALSE(row(partial, 3, Variant::gauge).ok);
    CHECK(row(partial, 3, Variant::plain).ok);
    CHECK(row(partial, 3, Variant::hgfm).ok);
    CHECK(exit_code(partial) == 2);
  }
}
