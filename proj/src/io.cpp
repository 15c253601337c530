#include "io.hpp"

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "errors.hpp"

namespace fedlab {

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)v);
  return std::string(buf);
}

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  in.seekg(0, std::ios::end);
  std::streamoff len = in.tellg();
  if (len < 0) fail(ErrorCode::Io, "cannot stat " + path);
  in.seekg(0, std::ios::beg);
  std::vector<uint8_t> bytes(static_cast<size_t>(len));
  if (len > 0) in.read(reinterpret_cast<char*>(bytes.data()), len);
  if (!in) fail(ErrorCode::Io, "short read on " + path);
  return bytes;
}

void write_file_atomic(const std::string& path, const void* data, size_t n) {
  namespace fs = std::filesystem;
  static std::atomic<uint64_t> counter{0};
  fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  fs::path tmp = target;
  tmp += ".tmp" + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot create " + tmp.string());
    if (n > 0) out.write(reinterpret_cast<const char*>(data), std::streamsize(n));
    out.flush();
    if (!out) fail(ErrorCode::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    fail(ErrorCode::Io, "rename failed for " + path);
  }
}

void write_file_atomic(const std::string& path, const std::vector<uint8_t>& bytes) {
  write_file_atomic(path, bytes.data(), bytes.size());
}

void write_file_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, text.data(), text.size());
}

}  // namespace fedlab
