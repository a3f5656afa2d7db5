#include "hgfm/binary_io.hpp"

#include "hgfm/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hgfm::io {

namespace fs = std::filesystem;

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h) noexcept {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

template <class T>
void put_le(std::string& out, T value) {
  auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  out.append(reinterpret_cast<const char*>(bits.data()), bits.size());
}

template <class T>
T get_le(const unsigned char* p) {
  std::array<unsigned char, sizeof(T)> bits;
  std::memcpy(bits.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  return std::bit_cast<T>(bits);
}

std::string encode_doubles(std::span<const double> values) {
  std::string out;
  out.reserve(values.size() * 8);
  for (double v : values) put_le(out, v);
  return out;
}

}  // namespace

std::uint64_t digest_doubles(std::span<const double> values) noexcept {
  const std::string bytes = encode_doubles(values);
  return fnv1a({reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()});
}

std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

void write_text_atomic(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::io, "cannot open '" + tmp.string() + "' for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    require(static_cast<bool>(out), ErrorCode::io, "write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  require(!ec, ErrorCode::io, "cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_container(const fs::path& path, std::string_view magic, nlohmann::json header,
                     std::span<const double> payload) {
  require(magic.size() == 8, ErrorCode::invalid_argument, "container magic must be 8 bytes");
  const std::string body = encode_doubles(payload);
  header["payload_digest"] = hex64(fnv1a({reinterpret_cast<const unsigned char*>(body.data()), body.size()}));
  const std::string json = header.dump();

  std::string out(magic);
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint64_t>(out, json.size());
  out += json;
  put_le<std::uint64_t>(out, payload.size());
  out += body;
  write_text_atomic(path, out);
}

Container read_container(const fs::path& path, std::string_view magic) {
  const std::string raw = read_text(path);
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  const std::size_t size = raw.size();
  const std::string where = "'" + path.string() + "'";

  require(size >= 20 && std::string_view(raw).substr(0, 8) == magic, ErrorCode::format,
          "corrupt header in " + where + ": bad magic");
  require(get_le<std::uint32_t>(p + 8) == kContainerVersion, ErrorCode::format,
          "corrupt header in " + where + ": unsupported version");
  const auto header_len = get_le<std::uint64_t>(p + 12);
  require(header_len <= size - 20, ErrorCode::format, "corrupt header in " + where + ": header length out of range");

  Container c;
  try {
    c.header = nlohmann::json::parse(raw.substr(20, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::format, "corrupt header in " + where + ": " + e.what());
  }
  std::size_t pos = 20 + header_len;
  require(size >= pos + 8, ErrorCode::format, "truncated payload in " + where + ": missing value count");
  const auto count = get_le<std::uint64_t>(p + pos);
  pos += 8;
  require(count <= (size - pos) / 8, ErrorCode::format,
          "truncated payload in " + where + ": expected " + std::to_string(count) + " values");
  require(size - pos == count * 8, ErrorCode::format, "corrupt payload in " + where + ": trailing bytes");

  c.payload.resize(count);
  for (std::size_t i = 0; i < count; ++i) c.payload[i] = get_le<double>(p + pos + 8 * i);
  const std::string digest = hex64(fnv1a({p + pos, static_cast<std::size_t>(count * 8)}));
  require(c.header.value("payload_digest", std::string{}) == digest, ErrorCode::integrity,
          "integrity error in " + where + ": payload digest mismatch");
  return c;
}

}  // namespace hgfm::io
