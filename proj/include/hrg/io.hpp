#pragma once

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hrg {

inline constexpr const char* kVersion = "0.1.0";

// shortest fixed format that round-trips every double
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// CSV with '#'-prefixed metadata lines, a header and fixed row order
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}

  void meta(const std::string& key, const std::string& value) { os_ << "# " << key << ": " << value << '\n'; }
  void header(const std::vector<std::string>& cols) {
    columns_ = cols.size();
    row(cols);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os_ << (i ? "," : "") << cells[i];
    os_ << '\n';
  }
  std::size_t columns() const { return columns_; }

 private:
  std::ostream& os_;
  std::size_t columns_ = 0;
};

}  // namespace hrg
