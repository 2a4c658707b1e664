// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace c2w::io {

/// Whole-file read/write. Both throw IoFailure.
std::vector<char> read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const char* bytes, std::size_t n);
void write_text(const std::filesystem::path& p, const std::string& text);

/// Parses a JSON file; throws IoFailure when unreadable and MalformedHeader
/// when not JSON.
nlohmann::json read_json(const std::filesystem::path& p);
/// Indented dump with a trailing newline.
void write_json(const std::filesystem::path& p, const nlohmann::json& j);

/// Little-endian float32 encoding regardless of host order.
std::vector<char> encode_f32le(std::span<const float> values);
void decode_f32le(const char* bytes, std::span<float> out);

}  // namespace c2w::io
