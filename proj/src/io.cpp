// SPDX-License-Identifier: Apache-2.0
#include "c2w/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "c2w/error.hpp"

namespace c2w::io {

namespace fs = std::filesystem;

std::vector<char> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const char* bytes, std::size_t n) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + p.string() + " for writing");
  out.write(bytes, static_cast<std::streamsize>(n));
  out.close();
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + p.string());
}

void write_text(const fs::path& p, const std::string& text) { write_file(p, text.data(), text.size()); }

nlohmann::json read_json(const fs::path& p) {
  const auto bytes = read_file(p);
  try {
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedHeader, p.string() + ": " + e.what());
  }
}

void write_json(const fs::path& p, const nlohmann::json& j) { write_text(p, j.dump(2) + "\n"); }

std::vector<char> encode_f32le(std::span<const float> values) {
  std::vector<char> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(values[i]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    std::memcpy(out.data() + 4 * i, &bits, 4);
  }
  return out;
}

void decode_f32le(const char* bytes, std::span<float> out) {
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, bytes + 4 * i, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    out[i] = std::bit_cast<float>(bits);
  }
}

}  // namespace c2w::io
