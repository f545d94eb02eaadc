#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "placerec/errors.hpp"

namespace placerec {

// Shortest round-trip decimal representation; deterministic across runs.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot open for writing: " + path.string());
  }
  return out;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("missing file: " + path.string());
  }
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    lines.push_back(line);
  }
  return lines;
}

// Minimal CSV emitter. Numeric cells go through format_double so output is
// byte-stable between runs.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path,
            std::initializer_list<std::string> header)
      : out_(open_output(path)) {
    bool first = true;
    for (const auto& h : header) {
      if (!first) out_ << ',';
      out_ << h;
      first = false;
    }
    out_ << '\n';
  }

  void row(const std::vector<double>& cells) {
    bool first = true;
    for (double c : cells) {
      if (!first) out_ << ',';
      out_ << format_double(c);
      first = false;
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

// Binary PGM (P5), one byte per cell, value x 255 rounded. values must lie
// in [0, 1]; rows of the matrix map to rows of the image.
inline void write_pgm(const std::filesystem::path& path,
                      const Eigen::MatrixXd& values) {
  auto out = open_output(path);
  out << "P5\n"
      << values.cols() << " " << values.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      double v = values(r, c);
      v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
      const auto byte = static_cast<unsigned char>(std::lround(v * 255.0));
      out.put(static_cast<char>(byte));
    }
  }
}

inline void write_matrix_csv(const std::filesystem::path& path,
                             const Eigen::MatrixXd& values) {
  auto out = open_output(path);
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) out << ',';
      out << format_double(values(r, c));
    }
    out << '\n';
  }
}

}  // namespace placerec
