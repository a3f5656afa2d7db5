#include "hgfm/experiment.hpp"

#include "hgfm/binary_io.hpp"
#include "hgfm/error.hpp"
#include "hgfm/gmm.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace hgfm::experiment {

namespace fs = std::filesystem;
using model::Variant;

namespace {

std::string cell_name(int n, std::uint64_t seed) { return "N" + std::to_string(n) + "_s" + std::to_string(seed); }

// Shortest text that round-trips.
std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string format_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Plan

void ExperimentPlan::validate() const {
  require(!dims.empty(), ErrorCode::invalid_argument, "plan: dims must not be empty");
  for (int n : dims)
    require(n >= 3 && n <= 32, ErrorCode::invalid_argument, "plan: N=" + std::to_string(n) + " outside [3, 32]");
  require(!seeds.empty(), ErrorCode::invalid_argument, "plan: at least one seed is required");
  require(!variants.empty(), ErrorCode::invalid_argument, "plan: variants must not be empty");
  require(jobs >= 1, ErrorCode::invalid_argument, "plan: jobs must be >= 1");
  require(data.is_object(), ErrorCode::invalid_argument, "plan: data overrides must be an object");
  train.validate();
  for (const auto& [variant, o] : overrides) (void)config_for(variant, seeds.front());
}

train::TrainConfig ExperimentPlan::config_for(Variant variant, std::uint64_t seed) const {
  train::TrainConfig c = train;
  if (auto it = overrides.find(variant); it != overrides.end()) c = train::TrainConfig::from_json(it->second, c);
  c.seed = seed;
  return c;
}

nlohmann::json ExperimentPlan::to_json() const {
  nlohmann::json v = nlohmann::json::array();
  for (auto var : variants) v.push_back(std::string(model::to_string(var)));
  nlohmann::json o = nlohmann::json::object();
  for (const auto& [var, j] : overrides) o[std::string(model::to_string(var))] = j;
  return {{"dims", dims}, {"seeds", seeds}, {"variants", v},    {"train", train.to_json()},
          {"overrides", o}, {"data", data}, {"jobs", jobs},     {"out_dir", out_dir.string()}};
}

ExperimentPlan ExperimentPlan::from_json(const nlohmann::json& j) {
  require(j.is_object(), ErrorCode::format, "plan: expected a JSON object");
  ExperimentPlan p;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "dims") {
        p.dims = value.get<std::vector<int>>();
      } else if (key == "seeds") {
        p.seeds = value.get<std::vector<std::uint64_t>>();
      } else if (key == "variants") {
        p.variants.clear();
        for (const auto& v : value) p.variants.push_back(model::parse_variant(v.get<std::string>()));
      } else if (key == "train") {
        p.train = train::TrainConfig::from_json(value);
      } else if (key == "overrides") {
        for (const auto& [name, o] : value.items()) p.overrides[model::parse_variant(name)] = o;
      } else if (key == "data") {
        p.data = value;
      } else if (key == "jobs") {
        p.jobs = value.get<int>();
      } else if (key == "out_dir") {
        p.out_dir = value.get<std::string>();
      } else {
        fail(ErrorCode::format, "plan: unknown key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("plan: ") + e.what());
  }
  p.validate();
  return p;
}

// ---------------------------------------------------------------------------
// Cells and report

nlohmann::json CellResult::to_json() const {
  nlohmann::json j = {{"n", n},
                      {"variant", model::to_string(variant)},
                      {"seed", seed},
                      {"ok", ok},
                      {"params", params},
                      {"data_digest", data_digest},
                      {"eval_digest", eval_digest},
                      {"wall_seconds", wall_seconds}};
  if (ok) {
    j["initial_train"] = initial_train;
    j["final_train"] = final_train;
    j["final_test"] = final_test;
  } else {
    j["error"] = error;
  }
  return j;
}

CellResult CellResult::from_json(const nlohmann::json& j) {
  CellResult c;
  try {
    c.n = j.at("n").get<int>();
    c.variant = model::parse_variant(j.at("variant").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.ok = j.at("ok").get<bool>();
    c.params = j.at("params").get<std::size_t>();
    c.data_digest = j.at("data_digest").get<std::string>();
    c.eval_digest = j.at("eval_digest").get<std::string>();
    c.wall_seconds = j.at("wall_seconds").get<double>();
    if (c.ok) {
      c.initial_train = j.at("initial_train").get<double>();
      c.final_train = j.at("final_train").get<double>();
      c.final_test = j.at("final_test").get<double>();
    } else {
      c.error = j.value("error", std::string{});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("cell result: ") + e.what());
  }
  return c;
}

std::string_view to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::warn: return "warn";
    case Verdict::incomplete: return "incomplete";
  }
  return "?";
}

namespace {
Verdict parse_verdict(std::string_view s) {
  if (s == "pass") return Verdict::pass;
  if (s == "warn") return Verdict::warn;
  if (s == "incomplete") return Verdict::incomplete;
  fail(ErrorCode::format, "unknown verdict '" + std::string(s) + "'");
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}
}  // namespace

bool ComparisonReport::complete() const noexcept {
  return std::all_of(cells.begin(), cells.end(), [](const CellResult& c) { return c.ok; });
}

nlohmann::json ComparisonReport::to_json() const {
  nlohmann::json r = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json j = {{"n", row.n},
                        {"variant", model::to_string(row.variant)},
                        {"ok", row.ok},
                        {"train", row.ok ? nlohmann::json(row.train) : nlohmann::json()},
                        {"test", row.ok ? nlohmann::json(row.test) : nlohmann::json()},
                        {"train_norm", optional_json(row.train_norm)},
                        {"test_norm", optional_json(row.test_norm)},
                        {"params", row.params},
                        {"seeds", row.seeds}};
    if (!row.ok) j["error"] = row.error;
    r.push_back(std::move(j));
  }
  nlohmann::json d = nlohmann::json::array();
  for (const auto& s : dims) d.push_back({{"n", s.n}, {"verdict", to_string(s.verdict)}, {"paired", s.paired}});
  nlohmann::json c = nlohmann::json::array();
  for (const auto& cell : cells) c.push_back(cell.to_json());
  return {{"format", "hgfm.report"}, {"version", 1}, {"rows", r}, {"dims", d}, {"cells", c}};
}

ComparisonReport ComparisonReport::from_json(const nlohmann::json& j) {
  ComparisonReport rep;
  try {
    require(j.at("format").get<std::string>() == "hgfm.report", ErrorCode::format, "not a report document");
    for (const auto& r : j.at("rows")) {
      ReportRow row;
      row.n = r.at("n").get<int>();
      row.variant = model::parse_variant(r.at("variant").get<std::string>());
      row.ok = r.at("ok").get<bool>();
      if (row.ok) {
        row.train = r.at("train").get<double>();
        row.test = r.at("test").get<double>();
      } else {
        row.error = r.value("error", std::string{});
      }
      row.train_norm = optional_from(r.at("train_norm"));
      row.test_norm = optional_from(r.at("test_norm"));
      row.params = r.at("params").get<std::size_t>();
      row.seeds = r.at("seeds").get<int>();
      rep.rows.push_back(std::move(row));
    }
    for (const auto& d : j.at("dims"))
      rep.dims.push_back(
          {d.at("n").get<int>(), parse_verdict(d.at("verdict").get<std::string>()), d.at("paired").get<bool>()});
    for (const auto& c : j.at("cells")) rep.cells.push_back(CellResult::from_json(c));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("report: ") + e.what());
  }
  return rep;
}

ComparisonReport assemble_report(const std::vector<CellResult>& cells) {
  ComparisonReport rep;
  rep.cells = cells;

  std::set<int> dims;
  std::map<std::pair<int, Variant>, std::vector<const CellResult*>> groups;
  for (const auto& c : cells) {
    dims.insert(c.n);
    groups[{c.n, c.variant}].push_back(&c);
  }

  for (int n : dims) {
    for (Variant v : {Variant::plain, Variant::gauge, Variant::hgfm}) {
      auto it = groups.find({n, v});
      if (it == groups.end()) continue;
      ReportRow row;
      row.n = n;
      row.variant = v;
      row.ok = true;
      row.params = it->second.front()->params;
      for (const auto* c : it->second) {
        if (!c->ok) {
          row.ok = false;
          if (row.error.empty()) row.error = "seed " + std::to_string(c->seed) + ": " + c->error;
          continue;
        }
        row.train += c->final_train;
        row.test += c->final_test;
        ++row.seeds;
      }
      if (row.ok) {
        row.train /= row.seeds;
        row.test /= row.seeds;
      } else {
        row.train = row.test = 0.0;
        row.seeds = 0;
      }
      rep.rows.push_back(std::move(row));
    }

    const ReportRow* ref = nullptr;
    for (const auto& row : rep.rows)
      if (row.n == n && row.variant == Variant::hgfm && row.ok) ref = &row;
    if (ref) {
      const double ref_train = ref->train, ref_test = ref->test;
      for (auto& row : rep.rows) {
        if (row.n != n || !row.ok) continue;
        if (row.variant == Variant::hgfm) {
          row.train_norm = 1.0;
          row.test_norm = 1.0;
        } else {
          row.train_norm = row.train / ref_train;
          row.test_norm = row.test / ref_test;
        }
      }
    }

    DimensionSummary s;
    s.n = n;
    std::map<std::uint64_t, std::pair<std::set<std::string>, std::set<std::string>>> digests;
    for (const auto& c : cells) {
      if (c.n != n) continue;
      auto& [data, eval] = digests[c.seed];
      data.insert(c.data_digest);
      if (c.ok) eval.insert(c.eval_digest);
    }
    for (const auto& [seed, d] : digests) s.paired = s.paired && d.first.size() <= 1 && d.second.size() <= 1;

    std::optional<double> plain, gauge, hgfm;
    for (const auto& row : rep.rows) {
      if (row.n != n || !row.ok) continue;
      if (row.variant == Variant::plain) plain = row.test;
      if (row.variant == Variant::gauge) gauge = row.test;
      if (row.variant == Variant::hgfm) hgfm = row.test;
    }
    if (hgfm && plain && gauge)
      s.verdict = (*hgfm <= *plain && *hgfm <= *gauge) ? Verdict::pass : Verdict::warn;
    rep.dims.push_back(s);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Running

namespace {

struct PreparedData {
  data::Dataset train;
  data::Dataset test;
  std::string digest;
};

data::GmmSpec spec_for(const ExperimentPlan& plan, int n, std::uint64_t seed) {
  auto spec = data::GmmSpec::for_dimension(n, seed);
  try {
    for (const auto& [key, value] : plan.data.items()) {
      if (key == "k") spec.k = value.get<int>();
      else if (key == "n_train") spec.n_train = value.get<int>();
      else if (key == "n_test") spec.n_test = value.get<int>();
      else if (key == "spread") spec.spread = value.get<double>();
      else if (key == "cov_scale") spec.cov_scale = value.get<double>();
      else fail(ErrorCode::format, "plan: unknown data key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("plan data overrides: ") + e.what());
  }
  spec.validate();
  return spec;
}

PreparedData prepare_data(const ExperimentPlan& plan, int n, std::uint64_t seed, const Progress& progress) {
  const auto spec = spec_for(plan, n, seed);
  const fs::path dir = plan.out_dir / "data" / cell_name(n, seed);
  bool cached = false;
  if (fs::exists(dir / "spec.json") && fs::exists(dir / "train.bin") && fs::exists(dir / "test.bin")) {
    try {
      cached = data::GmmSpec::from_json(nlohmann::json::parse(io::read_text(dir / "spec.json"))) == spec;
    } catch (const std::exception&) {
      cached = false;
    }
  }
  if (!cached) {
    if (progress) progress("generating data " + cell_name(n, seed));
    data::generate_to_dir(spec, dir);
  }
  PreparedData d{data::load_dataset(dir / "train.bin"), data::load_dataset(dir / "test.bin"), {}};
  require(d.train.spec == spec, ErrorCode::integrity, "cached dataset in " + dir.string() + " has a different spec");
  const std::uint64_t h = io::digest_doubles(d.train.points) ^ splitmix64(io::digest_doubles(d.test.points));
  d.digest = spec.hash() + ":" + io::hex64(h);
  return d;
}

CellResult run_cell(const ExperimentPlan& plan, const PreparedData& data, int n, Variant variant,
                    std::uint64_t seed, const Progress& progress) {
  CellResult cell;
  cell.n = n;
  cell.variant = variant;
  cell.seed = seed;
  cell.data_digest = data.digest;
  const auto config = plan.config_for(variant, seed);
  cell.params = model::count_params(variant, n, config.model_options);

  const fs::path dir = plan.out_dir / "runs" / (cell_name(n, seed) + "_" + std::string(model::to_string(variant)));
  const nlohmann::json key = {{"config", config.to_json()}, {"data_digest", data.digest}};
  const fs::path cell_file = dir / "cell.json";
  if (fs::exists(cell_file)) {
    try {
      const auto stored = nlohmann::json::parse(io::read_text(cell_file));
      if (stored.at("key") == key) {
        auto cached = CellResult::from_json(stored.at("result"));
        if (cached.ok) {
          if (progress) progress("cached " + dir.filename().string());
          return cached;
        }
      }
    } catch (const std::exception&) {
      // Stale or unreadable cache entries are retrained.
    }
  }

  if (progress) progress("training " + dir.filename().string());
  try {
    fs::create_directories(dir);
    auto m = model::build_model(variant, n, seed, config.model_options);
    const auto metrics = train::train(m, data.train, data.test, config);
    model::save_checkpoint(m, dir / "model.ckpt", config.steps, {{"config", config.to_json()}});
    io::write_text_atomic(dir / "metrics.json", metrics.to_json().dump());
    cell.ok = true;
    cell.initial_train = metrics.initial_train;
    cell.final_train = metrics.final_train;
    cell.final_test = metrics.final_test;
    cell.eval_digest = metrics.test_eval_digest;
    cell.wall_seconds = metrics.wall_seconds;
  } catch (const std::exception& e) {
    cell.ok = false;
    cell.error = e.what();
  }
  try {
    io::write_text_atomic(cell_file, nlohmann::json{{"key", key}, {"result", cell.to_json()}}.dump(2));
  } catch (const std::exception&) {
    // The in-memory result is still reported.
  }
  if (progress)
    progress((cell.ok ? "done " : "FAILED ") + dir.filename().string() +
             (cell.ok ? " test=" + format_short(cell.final_test) : ": " + cell.error));
  return cell;
}

}  // namespace

ComparisonReport run_experiment(const ExperimentPlan& plan, const Progress& progress) {
  plan.validate();
  fs::create_directories(plan.out_dir);
  io::write_text_atomic(plan.out_dir / "plan.json", plan.to_json().dump(2));

  std::mutex log_mutex;
  const Progress log = [&](const std::string& msg) {
    if (!progress) return;
    std::lock_guard lock(log_mutex);
    progress(msg);
  };

  struct Job {
    int n;
    std::uint64_t seed;
    Variant variant;
    std::size_t data_index;
  };
  std::vector<PreparedData> prepared;
  std::vector<std::string> data_errors;
  std::vector<Job> jobs;
  for (int n : plan.dims) {
    for (auto seed : plan.seeds) {
      std::string error;
      try {
        prepared.push_back(prepare_data(plan, n, seed, log));
      } catch (const std::exception& e) {
        prepared.push_back({});
        error = e.what();
      }
      data_errors.push_back(error);
      for (auto v : plan.variants) jobs.push_back({n, seed, v, prepared.size() - 1});
    }
  }

  std::vector<CellResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto& job = jobs[i];
      if (!data_errors[job.data_index].empty()) {
        auto& c = results[i];
        c.n = job.n;
        c.variant = job.variant;
        c.seed = job.seed;
        c.ok = false;
        c.error = "data: " + data_errors[job.data_index];
        continue;
      }
      results[i] = run_cell(plan, prepared[job.data_index], job.n, job.variant, job.seed, log);
    }
  };
  const auto pool = std::min<std::size_t>(static_cast<std::size_t>(plan.jobs), jobs.size());
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < pool; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  auto report = assemble_report(results);
  for (auto fmt : {Format::json, Format::csv, Format::md}) {
    const char* ext = fmt == Format::json ? "json" : fmt == Format::csv ? "csv" : "md";
    emit_report(report, fmt, plan.out_dir / (std::string("report.") + ext));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Rendering

Format parse_format(std::string_view name) {
  if (name == "json") return Format::json;
  if (name == "csv") return Format::csv;
  if (name == "md") return Format::md;
  fail(ErrorCode::invalid_argument, "unknown report format '" + std::string(name) + "' (json, csv or md)");
}

std::string render_report(const ComparisonReport& report, Format format) {
  std::ostringstream out;
  auto opt = [](const std::optional<double>& v, bool full) {
    return v ? (full ? format_number(*v) : format_short(*v)) : std::string{};
  };
  switch (format) {
    case Format::json:
      out << report.to_json().dump(2) << '\n';
      break;
    case Format::csv:
      out << "N,variant,train,test,train_norm,test_norm,params\n";
      for (const auto& r : report.rows) {
        out << r.n << ',' << model::to_string(r.variant) << ',';
        if (r.ok)
          out << format_number(r.train) << ',' << format_number(r.test);
        else
          out << "FAILED,FAILED";
        out << ',' << opt(r.train_norm, true) << ',' << opt(r.test_norm, true) << ',' << r.params << '\n';
      }
      break;
    case Format::md:
      out << "| N | variant | train | test | train_norm | test_norm | params | status |\n";
      out << "|---|---|---|---|---|---|---|---|\n";
      for (const auto& r : report.rows) {
        out << "| " << r.n << " | " << model::to_string(r.variant) << " | ";
        if (r.ok)
          out << format_short(r.train) << " | " << format_short(r.test);
        else
          out << "- | -";
        out << " | " << opt(r.train_norm, false) << " | " << opt(r.test_norm, false) << " | " << r.params << " | "
            << (r.ok ? "ok" : "FAILED: " + r.error) << " |\n";
      }
      if (!report.dims.empty()) {
        out << "\n| N | verdict (hgfm lowest test loss) | paired evaluation |\n|---|---|---|\n";
        for (const auto& d : report.dims)
          out << "| " << d.n << " | " << to_string(d.verdict) << " | " << (d.paired ? "yes" : "NO") << " |\n";
      }
      break;
  }
  return out.str();
}

void emit_report(const ComparisonReport& report, Format format, const fs::path& path) {
  try {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
  } catch (const fs::filesystem_error& e) {
    fail(ErrorCode::io, "cannot create report directory: " + std::string(e.what()));
  }
  io::write_text_atomic(path, render_report(report, format));
}

int exit_code(const ComparisonReport& report) noexcept { return report.complete() ? 0 : 2; }

}  // namespace hgfm::experiment
