#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graphcp/data.hpp"
#include "graphcp/errors.hpp"

namespace graphcp {

// ---------------------------------------------------------------------------
// Probabilities: CSV with header c0..c{K-1}, or little-endian float32 binary
// with an 8-byte (num_nodes, K) uint32 header.

inline ProbabilityMatrix read_probabilities_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("probability CSV is empty");
  std::size_t k = 0;
  {
    std::stringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) {
      if (detail::trim(cell) != "c" + std::to_string(k)) {
        throw DataError("probability CSV header must be c0..c{K-1}, got '" + cell + "'");
      }
      ++k;
    }
  }
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        const std::string t(detail::trim(cell));
        values.push_back(std::stod(t, &used));
        if (used != t.size()) throw std::invalid_argument(t);
      } catch (const std::exception&) {
        throw DataError("malformed probability value '" + cell + "' in row " + std::to_string(rows));
      }
      ++cols;
    }
    if (cols != k) throw DataError("row " + std::to_string(rows) + " has " + std::to_string(cols) + " columns");
    ++rows;
  }
  return {rows, k, std::move(values)};
}

inline void write_probabilities_csv(std::ostream& out, const ProbabilityMatrix& p) {
  for (std::size_t c = 0; c < p.num_classes(); ++c) out << (c ? "," : "") << 'c' << c;
  out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (NodeId v = 0; v < p.num_nodes(); ++v) {
    const auto row = p.row(v);
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << '\n';
  }
}

namespace detail {

inline std::uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError("truncated binary probability file");
  return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
         (std::uint32_t{b[3]} << 24);
}

inline void write_u32_le(std::ostream& out, std::uint32_t x) {
  const char b[4] = {static_cast<char>(x & 0xFF), static_cast<char>((x >> 8) & 0xFF),
                     static_cast<char>((x >> 16) & 0xFF), static_cast<char>((x >> 24) & 0xFF)};
  out.write(b, 4);
}

}  // namespace detail

inline ProbabilityMatrix read_probabilities_binary(std::istream& in) {
  const std::uint32_t n = detail::read_u32_le(in);
  const std::uint32_t k = detail::read_u32_le(in);
  std::vector<double> values(static_cast<std::size_t>(n) * k);
  for (auto& v : values) {
    const float f = std::bit_cast<float>(detail::read_u32_le(in));
    v = static_cast<double>(f);
  }
  return {n, k, std::move(values)};
}

inline void write_probabilities_binary(std::ostream& out, const ProbabilityMatrix& p) {
  detail::write_u32_le(out, static_cast<std::uint32_t>(p.num_nodes()));
  detail::write_u32_le(out, static_cast<std::uint32_t>(p.num_classes()));
  for (double v : p.values()) detail::write_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

/// Dispatches on extension: `.csv` is text, anything else is the binary format.
inline ProbabilityMatrix load_probabilities(const std::string& path) {
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  std::ifstream in(path, csv ? std::ios::in : std::ios::binary);
  if (!in) throw DataError("cannot open probabilities '" + path + "'");
  return csv ? read_probabilities_csv(in) : read_probabilities_binary(in);
}

inline void save_probabilities(const std::string& path, const ProbabilityMatrix& p) {
  const bool csv = path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
  std::ofstream out(path, csv ? std::ios::out : std::ios::binary);
  if (!out) throw DataError("cannot write probabilities '" + path + "'");
  if (csv) write_probabilities_csv(out, p); else write_probabilities_binary(out, p);
}

// ---------------------------------------------------------------------------
// Labels: one integer per line.

inline LabelVector read_labels(std::istream& in, std::size_t num_classes) {
  std::vector<Label> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    Label y{};
    if (!detail::parse_int(line, y)) throw DataError("malformed label at line " + std::to_string(line_no));
    labels.push_back(y);
  }
  return {std::move(labels), num_classes};
}

inline LabelVector load_labels(const std::string& path, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open labels '" + path + "'");
  return read_labels(in, num_classes);
}

inline void write_labels(std::ostream& out, const LabelVector& labels) {
  for (Label y : labels.values()) out << y << '\n';
}

// ---------------------------------------------------------------------------
// Splits: {"train": [...], "valid": [...], "calib": [...], "test": [...]}

inline nlohmann::json to_json(const SplitAssignment& s) {
  return {{"train", s.train}, {"valid", s.valid}, {"calib", s.calib}, {"test", s.test}};
}

inline SplitAssignment split_from_json(const nlohmann::json& j) {
  SplitAssignment s;
  try {
    j.at("train").get_to(s.train);
    j.at("valid").get_to(s.valid);
    j.at("calib").get_to(s.calib);
    j.at("test").get_to(s.test);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed split JSON: ") + e.what());
  }
  return s;
}

inline SplitAssignment load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("split '" + path + "' is not valid JSON: " + e.what());
  }
  return split_from_json(j);
}

inline void save_split(const std::string& path, const SplitAssignment& s) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write split '" + path + "'");
  out << to_json(s).dump() << '\n';
}

}  // namespace graphcp
