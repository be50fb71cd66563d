#pragma once

// Minimal CSV emitter. Every file carries the resolved configuration
// fingerprint as its final column so any number in any sheet can be traced
// back to the exact run settings that produced it.

#include <fstream>
#include <string>
#include <vector>

#include "vdst/core/error.hpp"

namespace vdst {
namespace io {

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header,
            std::string fingerprint)
      : out_(path, std::ios::trunc),
        fingerprint_(std::move(fingerprint)),
        cols_(header.size()) {
    if (!out_.good()) throw IoError("csv: cannot write " + path);
    require_input(!header.empty(), "csv: empty header");
    for (const auto& h : header) out_ << h << ',';
    out_ << "config_fingerprint\n";
  }

  void row(const std::vector<std::string>& cells) {
    require_input(cells.size() == cols_,
                  "csv: row has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(cols_));
    for (const auto& c : cells) out_ << c << ',';
    out_ << fingerprint_ << '\n';
  }

  void close() {
    if (out_.is_open()) {
      out_.flush();
      if (!out_.good()) throw IoError("csv: short write");
      out_.close();
    }
  }

 private:
  std::ofstream out_;
  std::string fingerprint_;
  std::size_t cols_;
};

}  // namespace io
}  // namespace vdst
