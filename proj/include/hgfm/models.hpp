#pragma once

// Network inventory of the three flow models.
//
//   hgfm:  gauge [N+1,h,h,N(2d+1)], field [N+1,h,h,N], graded0 [N+1,h,h,d],
//          graded1 [N+1,h,h,d+1], proj0/proj1 [N+1,h,h,N], alpha [1,16,1]
//   gauge: the degree-0 truncation: gauge [N+1,h,h,N d], field, graded0, proj0, alpha
//   plain: field [N+1,128,128,128,N]
//
// with d = N(N-1)/2 and h = 32 for N > 10, else 64.

#include "hgfm/graded_algebra.hpp"
#include "hgfm/nn.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string_view>
#include <utility>
#include <vector>

namespace hgfm::model {

enum class Variant { plain, gauge, hgfm };

std::string_view to_string(Variant v) noexcept;
Variant parse_variant(std::string_view name);

enum class Role { gauge, field, graded0, graded1, proj0, proj1, alpha, direction, graded0_b, graded1_b };

std::string_view to_string(Role r) noexcept;
Role parse_role(std::string_view name);

struct ModelOptions {
  /// 0 selects the width rule.
  int hidden_width = 0;
  /// Independent direction network instead of reusing the field output.
  bool direction_net = false;
  /// Second graded field feeding the last slot of the ternary bracket.
  bool two_field = false;

  bool operator==(const ModelOptions&) const = default;
};

int hidden_width_for(int n) noexcept;
std::size_t so_dim(int n) noexcept;

/// Pure inventory, no parameters allocated.
std::vector<std::pair<Role, nn::MlpSpec>> network_specs(Variant variant, int n, const ModelOptions& options = {});

struct Network {
  Role role;
  nn::Mlp mlp;
};

class FlowModel {
 public:
  FlowModel(Variant variant, int n, std::uint64_t seed, ModelOptions options);

  Variant variant() const noexcept { return variant_; }
  int n() const noexcept { return n_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const ModelOptions& options() const noexcept { return options_; }
  /// nullptr for the plain model.
  const algebra::LInfinityAlgebra* algebra() const noexcept { return algebra_.get(); }

  bool has(Role role) const noexcept;
  nn::Mlp& net(Role role);
  const nn::Mlp& net(Role role) const;
  std::vector<Network>& networks() noexcept { return networks_; }
  const std::vector<Network>& networks() const noexcept { return networks_; }

  std::vector<nn::ParamTensor*> params();
  std::vector<const nn::ParamTensor*> params() const;
  std::size_t param_count() const noexcept;
  void zero_grad();

 private:
  Variant variant_;
  int n_;
  std::uint64_t seed_;
  ModelOptions options_;
  std::shared_ptr<const algebra::LInfinityAlgebra> algebra_;
  std::vector<Network> networks_;
};

FlowModel build_hgfm(int n, std::uint64_t seed, ModelOptions options = {});
/// Variant::plain or Variant::gauge.
FlowModel build_baseline(Variant variant, int n, std::uint64_t seed, ModelOptions options = {});
FlowModel build_model(Variant variant, int n, std::uint64_t seed, ModelOptions options = {});

std::size_t count_params(const FlowModel& model) noexcept;
std::size_t count_params(Variant variant, int n, const ModelOptions& options = {});

/// Network table (role, layer dims, activation, parameter count) as JSON.
nlohmann::json describe(Variant variant, int n, const ModelOptions& options = {});

void save_checkpoint(const FlowModel& model, const std::filesystem::path& path, std::int64_t step,
                     const nlohmann::json& extra = nlohmann::json::object());
FlowModel load_checkpoint(const std::filesystem::path& path, std::int64_t* step = nullptr);

}  // namespace hgfm::model
