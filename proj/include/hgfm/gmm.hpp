#pragma once

// Procedural Gaussian-mixture datasets: K equally weighted isotropic
// components in R^N with deterministically constructed means.

#include "hgfm/rng.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hgfm::data {

struct SizeSchedule {
  int k = 0;
  int n_train = 0;
  int n_test = 0;
  bool operator==(const SizeSchedule&) const = default;
};

/// [3,8) -> (3000, 15000, 5000); [8,12) -> (5000, 20000, 7500); [12,32] -> (7000, 27000, 10000).
SizeSchedule spec_for_dimension(int n);

enum class Split { train, test };
std::string_view to_string(Split s) noexcept;

struct GmmSpec {
  int n = 3;
  int k = 3000;
  double spread = 25.0;
  double cov_scale = 0.5;
  int n_train = 15000;
  int n_test = 5000;
  std::uint64_t seed = 0;

  static GmmSpec for_dimension(int n, std::uint64_t seed);
  void validate() const;
  nlohmann::json to_json() const;
  static GmmSpec from_json(const nlohmann::json& j);
  /// Hex FNV-1a digest of the canonical JSON form.
  std::string hash() const;
  int rows(Split split) const noexcept { return split == Split::train ? n_train : n_test; }
  bool operator==(const GmmSpec&) const = default;
};

std::vector<double> component_mean(const GmmSpec& spec, int component);

struct Dataset {
  GmmSpec spec;
  Split split = Split::train;
  int rows = 0;
  int n = 0;
  /// Row-major rows x n.
  std::vector<double> points;
  /// Component index per row; only filled by sample_dataset.
  std::vector<int> components;
  std::string spec_hash;

  std::span<const double> row(int i) const {
    return {points.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n), static_cast<std::size_t>(n)};
  }
};

struct SampleOptions {
  /// Test hook: replaces the Gaussian noise by zero.
  bool zero_noise = false;
};

/// x = mean + sqrt(cov_scale) z, z ~ N(0, I).
void draw_point(const GmmSpec& spec, std::span<const double> mean, Rng& rng, std::span<double> out,
                bool zero_noise = false);

/// Row i uses its own stream derived from (seed, split, i).
Dataset sample_dataset(const GmmSpec& spec, Split split, SampleOptions options = {});

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
void write_csv(const Dataset& ds, const std::filesystem::path& path);

/// Plain point arrays (generated samples) in the same container format.
void save_points(const std::filesystem::path& path, int n, std::span<const double> points,
                 const nlohmann::json& meta = nlohmann::json::object());
std::vector<double> load_points(const std::filesystem::path& path, int* n = nullptr);

/// Writes train.bin, test.bin and spec.json (optionally train.csv/test.csv).
GmmSpec generate_to_dir(const GmmSpec& spec, const std::filesystem::path& dir, bool csv = false);

}  // namespace hgfm::data
