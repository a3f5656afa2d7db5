#pragma once

// Benchmark harness: for every (N, seed) trains the plain, gauge and hgfm
// variants on the same dataset and evaluation triples, then reports final
// losses normalized to the hgfm value at the same N.

#include "hgfm/models.hpp"
#include "hgfm/training.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hgfm::experiment {

struct ExperimentPlan {
  std::vector<int> dims{3};
  std::vector<std::uint64_t> seeds{0};
  std::vector<model::Variant> variants{model::Variant::plain, model::Variant::gauge, model::Variant::hgfm};
  train::TrainConfig train;
  /// Per-variant TrainConfig keys applied on top of `train`.
  std::map<model::Variant, nlohmann::json> overrides;
  /// GmmSpec keys (k, n_train, n_test, spread, cov_scale) replacing the dimension schedule.
  nlohmann::json data = nlohmann::json::object();
  /// Concurrent training cells.
  int jobs = 1;
  std::filesystem::path out_dir = "results";

  void validate() const;
  train::TrainConfig config_for(model::Variant variant, std::uint64_t seed) const;
  nlohmann::json to_json() const;
  static ExperimentPlan from_json(const nlohmann::json& j);
};

/// One trained (N, variant, seed) run.
struct CellResult {
  int n = 0;
  model::Variant variant = model::Variant::hgfm;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double initial_train = 0.0;
  double final_train = 0.0;
  double final_test = 0.0;
  std::size_t params = 0;
  std::string data_digest;
  std::string eval_digest;
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
  static CellResult from_json(const nlohmann::json& j);
};

/// Seed-averaged (N, variant) entry.
struct ReportRow {
  int n = 0;
  model::Variant variant = model::Variant::hgfm;
  bool ok = false;
  std::string error;
  double train = 0.0;
  double test = 0.0;
  std::optional<double> train_norm;
  std::optional<double> test_norm;
  std::size_t params = 0;
  int seeds = 0;
};

enum class Verdict { pass, warn, incomplete };
std::string_view to_string(Verdict v) noexcept;

struct DimensionSummary {
  int n = 0;
  Verdict verdict = Verdict::incomplete;
  /// Every variant of every seed saw the same dataset and evaluation triples.
  bool paired = true;
};

struct ComparisonReport {
  std::vector<ReportRow> rows;
  std::vector<DimensionSummary> dims;
  std::vector<CellResult> cells;

  bool complete() const noexcept;
  nlohmann::json to_json() const;
  static ComparisonReport from_json(const nlohmann::json& j);
};

/// Averages seeds by arithmetic mean, normalizes to hgfm, derives verdicts.
ComparisonReport assemble_report(const std::vector<CellResult>& cells);

using Progress = std::function<void(const std::string&)>;

/// Datasets and finished runs are cached under plan.out_dir and reused.
ComparisonReport run_experiment(const ExperimentPlan& plan, const Progress& progress = {});

enum class Format { json, csv, md };
Format parse_format(std::string_view name);
std::string render_report(const ComparisonReport& report, Format format);
void emit_report(const ComparisonReport& report, Format format, const std::filesystem::path& path);

/// 0 when every cell completed, 2 otherwise.
int exit_code(const ComparisonReport& report) noexcept;

}  // namespace hgfm::experiment
