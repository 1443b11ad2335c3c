#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "ulab/errors.hpp"

namespace ulab {

/// Deterministic CSV number formatting ("%.12g"; NaN prints as the explicit
/// sentinel "nan"). All emitted CSVs go through this so reruns are
/// byte-identical.
inline std::string csv_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

/// Line-buffered CSV writer with a fixed header.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& columns)
      : path_(path), file_(path) {
    if (!file_) throw format_error("cannot open CSV for writing: " + path);
    for (std::size_t i = 0; i < columns.size(); ++i)
      file_ << (i ? "," : "") << columns[i];
    file_ << "\n";
    width_ = columns.size();
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != width_)
      throw contract_error("CSV row width mismatch for " + path_);
    for (std::size_t i = 0; i < cells.size(); ++i)
      file_ << (i ? "," : "") << cells[i];
    file_ << "\n";
    ++rows_;
  }

  std::size_t rows() const { return rows_; }

  void close() {
    file_.close();
    if (file_.fail()) throw format_error("short write to CSV: " + path_);
  }

 private:
  std::string path_;
  std::ofstream file_;
  std::size_t width_ = 0;
  std::size_t rows_ = 0;
};

}  // namespace ulab
