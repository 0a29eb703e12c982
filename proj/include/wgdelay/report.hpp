#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "wgdelay/errors.hpp"

namespace wg::report {

// FNV-1a over the canonical config text; stable across runs and platforms.
inline std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// Write-then-rename so partial artifacts never appear under the final name.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    require(bool(os), ErrorCode::io, "cannot open " + tmp.string() + " for writing");
    os << content;
    require(bool(os), ErrorCode::io, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  require(!ec, ErrorCode::io, "rename failed for " + path.string() + ": " + ec.message());
}

class CsvBuilder {
 public:
  explicit CsvBuilder(const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) os_ << ',';
      os_ << header[i];
    }
    os_ << '\n';
    os_ << std::setprecision(17);
  }

  template <typename... Ts>
  void row(const Ts&... vals) {
    bool first = true;
    ((os_ << (first ? "" : ","), first = false, os_ << vals), ...);
    os_ << '\n';
  }

  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
};

}  // namespace wg::report
