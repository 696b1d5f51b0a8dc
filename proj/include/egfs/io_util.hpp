#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace egfs {

/// Thrown on unreadable, truncated, or wrong-version files.
struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Writes content to a temporary sibling file and renames it into place, so
/// readers never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content);
void write_file_atomic(const std::filesystem::path& path,
                       const std::vector<uint8_t>& content);

std::string read_file(const std::filesystem::path& path);
std::vector<uint8_t> read_file_bytes(const std::filesystem::path& path);

/// Shortest decimal form that round-trips the double exactly (%.17g trimmed).
std::string format_double(double v);

/// Little-endian primitive append/read helpers for binary formats.
void append_u32(std::vector<uint8_t>& buf, uint32_t v);
void append_f32(std::vector<uint8_t>& buf, float v);
uint32_t read_u32(const std::vector<uint8_t>& buf, size_t& off);
float read_f32(const std::vector<uint8_t>& buf, size_t& off);
uint8_t read_u8(const std::vector<uint8_t>& buf, size_t& off);

}  // namespace egfs
