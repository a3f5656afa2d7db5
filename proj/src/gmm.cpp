#include "hgfm/gmm.hpp"

#include "hgfm/binary_io.hpp"
#include "hgfm/error.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace hgfm::data {

namespace {
constexpr const char* kDataMagic = "HGFMDATA";
constexpr std::uint64_t kTrainTag = 0x747261696eull;
constexpr std::uint64_t kTestTag = 0x74657374ull;
}  // namespace

SizeSchedule spec_for_dimension(int n) {
  require(n >= 3 && n <= 32, ErrorCode::invalid_argument,
          "dataset dimension must be in [3, 32], got " + std::to_string(n));
  if (n < 8) return {3000, 15000, 5000};
  if (n < 12) return {5000, 20000, 7500};
  return {7000, 27000, 10000};
}

std::string_view to_string(Split s) noexcept { return s == Split::train ? "train" : "test"; }

GmmSpec GmmSpec::for_dimension(int n, std::uint64_t seed) {
  const auto sched = spec_for_dimension(n);
  GmmSpec spec;
  spec.n = n;
  spec.k = sched.k;
  spec.n_train = sched.n_train;
  spec.n_test = sched.n_test;
  spec.seed = seed;
  return spec;
}

void GmmSpec::validate() const {
  require(n >= 1 && k >= 1, ErrorCode::invalid_argument, "gmm spec: n and k must be positive");
  require(n_train >= 0 && n_test >= 0, ErrorCode::invalid_argument, "gmm spec: split sizes must be non-negative");
  require(cov_scale > 0.0 && std::isfinite(spread), ErrorCode::invalid_argument, "gmm spec: bad spread/covariance");
}

nlohmann::json GmmSpec::to_json() const {
  return {{"n", n},           {"k", k},           {"spread", spread}, {"cov_scale", cov_scale},
          {"n_train", n_train}, {"n_test", n_test}, {"seed", seed}};
}

GmmSpec GmmSpec::from_json(const nlohmann::json& j) {
  GmmSpec s;
  try {
    s.n = j.at("n").get<int>();
    s.k = j.at("k").get<int>();
    s.spread = j.at("spread").get<double>();
    s.cov_scale = j.at("cov_scale").get<double>();
    s.n_train = j.at("n_train").get<int>();
    s.n_test = j.at("n_test").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, std::string("gmm spec: ") + e.what());
  }
  return s;
}

std::string GmmSpec::hash() const {
  const std::string canon = to_json().dump();
  return io::hex64(io::fnv1a({reinterpret_cast<const unsigned char*>(canon.data()), canon.size()}));
}

std::vector<double> component_mean(const GmmSpec& spec, int component) {
  require(component >= 0 && component < spec.k, ErrorCode::invalid_argument,
          "component index " + std::to_string(component) + " out of range [0, " + std::to_string(spec.k) + ")");
  const int n = spec.n;
  const int k = component;
  std::vector<double> mu(static_cast<std::size_t>(n), 0.0);

  const int a1 = k % n;
  mu[static_cast<std::size_t>(a1)] = (k % 2 == 0 ? 1.0 : -1.0) * spec.spread;

  const int a2 = (k + spec.k / 2) % n;
  if (a2 != a1) mu[static_cast<std::size_t>(a2)] = (k % 2 == 0 ? -1.0 : 1.0) * spec.spread / 2.0;

  if (spec.k > n && k >= n) {
    const int level = k / n;
    const int b = (a1 + level) % n;
    const double s = (k % 3 == 0) ? 1.0 : -1.0;
    mu[static_cast<std::size_t>(b)] += s * 0.1 * spec.spread * static_cast<double>(level);
  }
  return mu;
}

void draw_point(const GmmSpec& spec, std::span<const double> mean, Rng& rng, std::span<double> out, bool zero_noise) {
  const double scale = std::sqrt(spec.cov_scale);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double z = rng.normal();
    out[i] = mean[i] + (zero_noise ? 0.0 : scale * z);
  }
}

Dataset sample_dataset(const GmmSpec& spec, Split split, SampleOptions options) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  ds.split = split;
  ds.n = spec.n;
  ds.rows = spec.rows(split);
  ds.spec_hash = spec.hash();
  ds.points.resize(static_cast<std::size_t>(ds.rows) * static_cast<std::size_t>(ds.n));
  ds.components.resize(static_cast<std::size_t>(ds.rows));

  std::vector<std::vector<double>> means;
  means.reserve(static_cast<std::size_t>(spec.k));
  for (int c = 0; c < spec.k; ++c) means.push_back(component_mean(spec, c));

  const std::uint64_t tag = split == Split::train ? kTrainTag : kTestTag;
  for (int i = 0; i < ds.rows; ++i) {
    Rng rng(stream_seed(spec.seed, tag, static_cast<std::uint64_t>(i)));
    const auto c = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.k)));
    ds.components[static_cast<std::size_t>(i)] = c;
    auto out = std::span<double>(ds.points).subspan(static_cast<std::size_t>(i) * static_cast<std::size_t>(ds.n),
                                                    static_cast<std::size_t>(ds.n));
    draw_point(spec, means[static_cast<std::size_t>(c)], rng, out, options.zero_noise);
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  require(ds.points.size() == static_cast<std::size_t>(ds.rows) * static_cast<std::size_t>(ds.n),
          ErrorCode::dimension_mismatch, "dataset: point array does not match rows x n");
  nlohmann::json header{{"kind", "hgfm-dataset"},
                        {"split", to_string(ds.split)},
                        {"rows", ds.rows},
                        {"n", ds.n},
                        {"spec", ds.spec.to_json()},
                        {"spec_hash", ds.spec.hash()},
                        {"normal_algorithm", Rng::normal_algorithm}};
  io::write_container(path, kDataMagic, header, ds.points);
}

Dataset load_dataset(const std::filesystem::path& path) {
  auto c = io::read_container(path, kDataMagic);
  Dataset ds;
  try {
    const auto& h = c.header;
    require(h.at("kind").get<std::string>() == "hgfm-dataset", ErrorCode::format,
            "'" + path.string() + "' is not a dataset file");
    ds.spec = GmmSpec::from_json(h.at("spec"));
    ds.spec_hash = h.at("spec_hash").get<std::string>();
    const auto split = h.at("split").get<std::string>();
    require(split == "train" || split == "test", ErrorCode::format, "dataset: unknown split '" + split + "'");
    ds.split = split == "train" ? Split::train : Split::test;
    ds.rows = h.at("rows").get<int>();
    ds.n = h.at("n").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, "corrupt header in '" + path.string() + "': " + e.what());
  }
  require(ds.spec_hash == ds.spec.hash(), ErrorCode::integrity,
          "integrity error in '" + path.string() + "': spec hash mismatch");
  require(ds.n == ds.spec.n && ds.rows == ds.spec.rows(ds.split), ErrorCode::format,
          "corrupt header in '" + path.string() + "': shape disagrees with spec");
  require(c.payload.size() == static_cast<std::size_t>(ds.rows) * static_cast<std::size_t>(ds.n),
          ErrorCode::format, "truncated payload in '" + path.string() + "'");
  ds.points = std::move(c.payload);
  return ds;
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (int j = 0; j < ds.n; ++j) out << (j ? "," : "") << "x" << j;
  out << "\n";
  for (int i = 0; i < ds.rows; ++i) {
    const auto r = ds.row(i);
    for (int j = 0; j < ds.n; ++j) out << (j ? "," : "") << r[static_cast<std::size_t>(j)];
    out << "\n";
  }
  io::write_text_atomic(path, out.str());
}

void save_points(const std::filesystem::path& path, int n, std::span<const double> points,
                 const nlohmann::json& meta) {
  require(n >= 1 && points.size() % static_cast<std::size_t>(n) == 0, ErrorCode::dimension_mismatch,
          "points: length is not a multiple of n");
  nlohmann::json header{{"kind", "hgfm-samples"},
                        {"rows", points.size() / static_cast<std::size_t>(n)},
                        {"n", n},
                        {"normal_algorithm", Rng::normal_algorithm},
                        {"meta", meta}};
  io::write_container(path, kDataMagic, header, points);
}

std::vector<double> load_points(const std::filesystem::path& path, int* n) {
  auto c = io::read_container(path, kDataMagic);
  const int dim = c.header.value("n", 0);
  const auto rows = c.header.value("rows", std::size_t{0});
  require(dim >= 1 && c.payload.size() == rows * static_cast<std::size_t>(dim), ErrorCode::format,
          "corrupt header in '" + path.string() + "': shape disagrees with payload");
  if (n) *n = dim;
  return std::move(c.payload);
}

GmmSpec generate_to_dir(const GmmSpec& spec, const std::filesystem::path& dir, bool csv) {
  spec.validate();
  std::filesystem::create_directories(dir);
  for (Split split : {Split::train, Split::test}) {
    const Dataset ds = sample_dataset(spec, split);
    save_dataset(ds, dir / (std::string(to_string(split)) + ".bin"));
    if (csv) write_csv(ds, dir / (std::string(to_string(split)) + ".csv"));
  }
  nlohmann::json doc = spec.to_json();
  doc["spec_hash"] = spec.hash();
  doc["normal_algorithm"] = Rng::normal_algorithm;
  io::write_text_atomic(dir / "spec.json", doc.dump(2) + "\n");
  return spec;
}

}  // namespace hgfm::data
