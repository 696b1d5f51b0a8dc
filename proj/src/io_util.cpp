#include "egfs/io_util.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace egfs {
namespace fs = std::filesystem;

namespace {

void write_atomic_impl(const fs::path& path, const void* data, size_t size) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for write: " + tmp.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& content) {
  write_atomic_impl(path, content.data(), content.size());
}

void write_file_atomic(const fs::path& path,
                       const std::vector<uint8_t>& content) {
  write_atomic_impl(path, content.data(), content.size());
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open: " + path.string());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

std::vector<uint8_t> read_file_bytes(const fs::path& path) {
  const std::string s = read_file(path);
  return std::vector<uint8_t>(s.begin(), s.end());
}

std::string format_double(double v) {
  char buf[40];
  // Shortest representation that parses back to the same double.
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void append_u32(std::vector<uint8_t>& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void append_f32(std::vector<uint8_t>& buf, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  append_u32(buf, bits);
}

uint32_t read_u32(const std::vector<uint8_t>& buf, size_t& off) {
  if (off + 4 > buf.size()) throw SchemaError("truncated file (u32)");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[off + i]) << (8 * i);
  off += 4;
  return v;
}

float read_f32(const std::vector<uint8_t>& buf, size_t& off) {
  const uint32_t bits = read_u32(buf, off);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

uint8_t read_u8(const std::vector<uint8_t>& buf, size_t& off) {
  if (off + 1 > buf.size()) throw SchemaError("truncated file (u8)");
  return buf[off++];
}

}  // namespace egfs
