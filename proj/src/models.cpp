#include "hgfm/models.hpp"

#include "hgfm/binary_io.hpp"
#include "hgfm/error.hpp"
#include "hgfm/rng.hpp"
#include "hgfm/son_algebra.hpp"

#include <algorithm>
#include <array>
#include <string>

namespace hgfm::model {

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 3> kVariants{
    {{Variant::plain, "plain"}, {Variant::gauge, "gauge"}, {Variant::hgfm, "hgfm"}}};

constexpr std::array<std::pair<Role, std::string_view>, 10> kRoles{{{Role::gauge, "gauge"},
                                                                    {Role::field, "field"},
                                                                    {Role::graded0, "graded0"},
                                                                    {Role::graded1, "graded1"},
                                                                    {Role::proj0, "proj0"},
                                                                    {Role::proj1, "proj1"},
                                                                    {Role::alpha, "alpha"},
                                                                    {Role::direction, "direction"},
                                                                    {Role::graded0_b, "graded0_b"},
                                                                    {Role::graded1_b, "graded1_b"}}};

constexpr const char* kCheckpointMagic = "HGFMCKPT";

}  // namespace

std::string_view to_string(Variant v) noexcept {
  for (const auto& [k, name] : kVariants)
    if (k == v) return name;
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (const auto& [k, n] : kVariants)
    if (n == name) return k;
  fail(ErrorCode::invalid_argument, "unknown model variant '" + std::string(name) + "'");
}

std::string_view to_string(Role r) noexcept {
  for (const auto& [k, name] : kRoles)
    if (k == r) return name;
  return "?";
}

Role parse_role(std::string_view name) {
  for (const auto& [k, n] : kRoles)
    if (n == name) return k;
  fail(ErrorCode::format, "unknown network role '" + std::string(name) + "'");
}

int hidden_width_for(int n) noexcept { return n > 10 ? 32 : 64; }

std::size_t so_dim(int n) noexcept { return static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2; }

std::vector<std::pair<Role, nn::MlpSpec>> network_specs(Variant variant, int n, const ModelOptions& options) {
  require(n >= 3, ErrorCode::invalid_argument, "model: N must be >= 3, got " + std::to_string(n));
  if (variant == Variant::plain) {
    return {{Role::field, nn::MlpSpec{{n + 1, 128, 128, 128, n}}}};
  }
  const int h = options.hidden_width > 0 ? options.hidden_width : hidden_width_for(n);
  const int d = static_cast<int>(so_dim(n));
  auto mlp = [&](int out) { return nn::MlpSpec{{n + 1, h, h, out}}; };

  std::vector<std::pair<Role, nn::MlpSpec>> specs;
  if (variant == Variant::hgfm) {
    specs = {{Role::gauge, mlp(n * (2 * d + 1))}, {Role::field, mlp(n)},  {Role::graded0, mlp(d)},
             {Role::graded1, mlp(d + 1)},         {Role::proj0, mlp(n)},  {Role::proj1, mlp(n)},
             {Role::alpha, nn::MlpSpec{{1, 16, 1}}}};
    if (options.two_field) {
      specs.emplace_back(Role::graded0_b, mlp(d));
      specs.emplace_back(Role::graded1_b, mlp(d + 1));
    }
  } else {
    specs = {{Role::gauge, mlp(n * d)},
             {Role::field, mlp(n)},
             {Role::graded0, mlp(d)},
             {Role::proj0, mlp(n)},
             {Role::alpha, nn::MlpSpec{{1, 16, 1}}}};
    if (options.two_field) specs.emplace_back(Role::graded0_b, mlp(d));
  }
  if (options.direction_net) specs.emplace_back(Role::direction, mlp(n));
  return specs;
}

FlowModel::FlowModel(Variant variant, int n, std::uint64_t seed, ModelOptions options)
    : variant_(variant), n_(n), seed_(seed), options_(options) {
  for (auto& [role, spec] : network_specs(variant, n, options)) {
    const auto tag = static_cast<std::uint64_t>(role) + 1;
    networks_.push_back({role, nn::Mlp::glorot(std::move(spec), stream_seed(seed, 0x6e6574ull, tag))});
  }
  if (variant == Variant::hgfm) {
    algebra_ = std::make_shared<const algebra::LInfinityAlgebra>(son::build_two_term(n));
  } else if (variant == Variant::gauge) {
    algebra_ = std::make_shared<const algebra::LInfinityAlgebra>(son::build_lie_algebra(n));
  }
}

bool FlowModel::has(Role role) const noexcept {
  return std::any_of(networks_.begin(), networks_.end(), [&](const Network& nw) { return nw.role == role; });
}

nn::Mlp& FlowModel::net(Role role) {
  for (auto& nw : networks_)
    if (nw.role == role) return nw.mlp;
  fail(ErrorCode::invalid_argument, "model has no '" + std::string(to_string(role)) + "' network");
}

const nn::Mlp& FlowModel::net(Role role) const {
  for (const auto& nw : networks_)
    if (nw.role == role) return nw.mlp;
  fail(ErrorCode::invalid_argument, "model has no '" + std::string(to_string(role)) + "' network");
}

std::vector<nn::ParamTensor*> FlowModel::params() {
  std::vector<nn::ParamTensor*> out;
  for (auto& nw : networks_) {
    auto p = nw.mlp.params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<const nn::ParamTensor*> FlowModel::params() const {
  std::vector<const nn::ParamTensor*> out;
  for (const auto& nw : networks_) {
    auto p = nw.mlp.params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::size_t FlowModel::param_count() const noexcept {
  std::size_t total = 0;
  for (const auto& nw : networks_) total += nw.mlp.param_count();
  return total;
}

void FlowModel::zero_grad() {
  for (auto& nw : networks_) nw.mlp.zero_grad();
}

FlowModel build_hgfm(int n, std::uint64_t seed, ModelOptions options) {
  return FlowModel(Variant::hgfm, n, seed, options);
}

FlowModel build_baseline(Variant variant, int n, std::uint64_t seed, ModelOptions options) {
  require(variant == Variant::plain || variant == Variant::gauge, ErrorCode::invalid_argument,
          "baseline variant must be plain or gauge");
  return FlowModel(variant, n, seed, options);
}

FlowModel build_model(Variant variant, int n, std::uint64_t seed, ModelOptions options) {
  return FlowModel(variant, n, seed, options);
}

std::size_t count_params(const FlowModel& model) noexcept { return model.param_count(); }

std::size_t count_params(Variant variant, int n, const ModelOptions& options) {
  std::size_t total = 0;
  for (const auto& [role, spec] : network_specs(variant, n, options)) total += spec.param_count();
  return total;
}

nlohmann::json describe(Variant variant, int n, const ModelOptions& options) {
  nlohmann::json doc;
  doc["variant"] = to_string(variant);
  doc["n"] = n;
  doc["networks"] = nlohmann::json::array();
  for (const auto& [role, spec] : network_specs(variant, n, options)) {
    doc["networks"].push_back({{"role", to_string(role)},
                               {"layer_dims", spec.layer_dims},
                               {"activation", "silu"},
                               {"params", spec.param_count()}});
  }
  doc["total_params"] = count_params(variant, n, options);
  return doc;
}

void save_checkpoint(const FlowModel& model, const std::filesystem::path& path, std::int64_t step,
                     const nlohmann::json& extra) {
  nlohmann::json header;
  header["kind"] = "hgfm-checkpoint";
  header["variant"] = to_string(model.variant());
  header["n"] = model.n();
  header["seed"] = model.seed();
  header["step"] = step;
  header["options"] = {{"hidden_width", model.options().hidden_width},
                       {"direction_net", model.options().direction_net},
                       {"two_field", model.options().two_field}};
  header["weight_layout"] = "column-major";
  header["networks"] = nlohmann::json::array();
  for (const auto& nw : model.networks())
    header["networks"].push_back({{"role", to_string(nw.role)}, {"layer_dims", nw.mlp.spec().layer_dims}});
  header["extra"] = extra;
  const auto params = model.params();
  io::write_container(path, kCheckpointMagic, header, nn::flatten_values(params));
}

FlowModel load_checkpoint(const std::filesystem::path& path, std::int64_t* step) {
  auto c = io::read_container(path, kCheckpointMagic);
  try {
    const auto& h = c.header;
    require(h.at("kind").get<std::string>() == "hgfm-checkpoint", ErrorCode::format, "not a checkpoint file");
    ModelOptions options;
    options.hidden_width = h.at("options").at("hidden_width").get<int>();
    options.direction_net = h.at("options").at("direction_net").get<bool>();
    options.two_field = h.at("options").at("two_field").get<bool>();
    FlowModel model(parse_variant(h.at("variant").get<std::string>()), h.at("n").get<int>(),
                    h.at("seed").get<std::uint64_t>(), options);
    const auto& nets = h.at("networks");
    require(nets.size() == model.networks().size(), ErrorCode::format, "checkpoint network list mismatch");
    for (std::size_t i = 0; i < nets.size(); ++i) {
      const auto& nw = model.networks()[i];
      require(parse_role(nets[i].at("role").get<std::string>()) == nw.role &&
                  nets[i].at("layer_dims").get<std::vector<int>>() == nw.mlp.spec().layer_dims,
              ErrorCode::format, "checkpoint network " + std::to_string(i) + " does not match the architecture");
    }
    auto params = model.params();
    nn::unflatten_values(params, c.payload);
    if (step) *step = h.at("step").get<std::int64_t>();
    return model;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, "corrupt checkpoint header: " + std::string(e.what()));
  }
}

}  // namespace hgfm::model
