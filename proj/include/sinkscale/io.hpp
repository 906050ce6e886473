#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sinkscale/matrix.hpp"

namespace sinkscale {

// Shortest round-trip decimal representation of a double.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// Plain-text dense format: first line "m n", then m lines of n decimal reals.
inline void save_matrix_txt(const Matrix& m, std::ostream& os) {
  os << m.rows() << ' ' << m.cols() << '\n';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) os << ' ';
      os << format_double(m(i, j));
    }
    os << '\n';
  }
}

inline Matrix load_matrix_txt(std::istream& is) {
  std::size_t rows = 0, cols = 0;
  if (!(is >> rows >> cols) || rows == 0 || cols == 0)
    throw InvalidInputError("matrix file must start with positive dimensions \"m n\"");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      if (!(is >> m(i, j)))
        throw InvalidInputError("matrix file truncated: expected " + std::to_string(rows * cols) +
                                " entries");
  return m;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  return nlohmann::json{{"rows", m.rows()}, {"cols", m.cols()}, {"entries", m.data()}};
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const std::size_t rows = j.at("rows").get<std::size_t>();
  const std::size_t cols = j.at("cols").get<std::size_t>();
  const auto entries = j.at("entries").get<std::vector<double>>();
  if (entries.size() != rows * cols)
    throw InvalidInputError("json matrix: entries length does not match rows*cols");
  Matrix m(rows, cols);
  m.data() = entries;
  return m;
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Dispatch on extension: ".json" uses the structured form, anything else the
// plain-text dense format.
inline Matrix load_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open matrix file: " + path);
  if (ends_with(path, ".json")) {
    nlohmann::json j;
    in >> j;
    return matrix_from_json(j);
  }
  return load_matrix_txt(in);
}

inline void save_matrix(const Matrix& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInputError("cannot write matrix file: " + path);
  if (ends_with(path, ".json")) {
    out << matrix_to_json(m).dump(2) << '\n';
    return;
  }
  save_matrix_txt(m, out);
}

// A vector file is whitespace-separated decimal reals.
inline std::vector<double> load_vector(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open vector file: " + path);
  std::vector<double> v;
  double x = 0.0;
  while (in >> x) v.push_back(x);
  if (v.empty()) throw InvalidInputError("vector file is empty: " + path);
  return v;
}

inline void save_vector(const std::vector<double>& v, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInputError("cannot write vector file: " + path);
  for (std::size_t i = 0; i < v.size(); ++i) out << format_double(v[i]) << '\n';
}

}  // namespace sinkscale
