#pragma once

// Container used by checkpoints, datasets and sample files:
//   8-byte magic | u32 version | u64 header length | JSON header
//   | u64 value count | little-endian float64 payload

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hgfm::io {

inline constexpr std::uint32_t kContainerVersion = 1;

struct Container {
  nlohmann::json header;
  std::vector<double> payload;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h = 0xcbf29ce484222325ull) noexcept;
std::uint64_t digest_doubles(std::span<const double> values) noexcept;
std::string hex64(std::uint64_t v);

/// Writes to a temporary sibling and renames over `path`. Adds "payload_digest".
void write_container(const std::filesystem::path& path, std::string_view magic, nlohmann::json header,
                     std::span<const double> payload);
Container read_container(const std::filesystem::path& path, std::string_view magic);

void write_text_atomic(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace hgfm::io
