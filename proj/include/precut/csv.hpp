#pragma once

#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace precut {

// Small CSV emitter with deterministic number formatting (%.17g round-trips
// doubles exactly), so byte-identical reruns are a testable property.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw std::runtime_error("csv: cannot write " + path);
    row(header);
  }

  void row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  static std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  }
  static std::string num(int v) { return std::to_string(v); }
  static std::string num(long long v) { return std::to_string(v); }
  static std::string num(unsigned long long v) { return std::to_string(v); }

 private:
  std::ofstream out_;
};

}  // namespace precut
