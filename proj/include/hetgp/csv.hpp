#pragma once

// Minimal numeric CSV reading and writing. The first line is a header; every
// following non-empty line holds the same number of numeric fields.

#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hetgp/errors.hpp"

namespace hetgp {

struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd data;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r\"");
    const auto e = field.find_last_not_of(" \t\r\"");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path);
  }
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) {
    throw ValidationError(path + ": empty file");
  }
  t.header = detail::split_csv_line(line);
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != t.header.size()) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " fields");
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) {
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(f, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != f.size()) {
        throw ValidationError(path + ":" + std::to_string(lineno) + ": non-numeric field '" + f +
                              "'");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw ValidationError(path + ": no data rows");
  }
  t.data.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      t.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return t;
}

/// Split a table into inputs (all but the last column) and response.
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> split_xy(const CsvTable& t) {
  if (t.data.cols() < 2) {
    throw ValidationError("csv: need at least one input column and one response column");
  }
  const Eigen::Index d = t.data.cols() - 1;
  return {t.data.leftCols(d), t.data.col(d)};
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const Eigen::MatrixXd& data) {
  if (static_cast<Eigen::Index>(header.size()) != data.cols()) {
    throw ValidationError("write_csv: header width does not match data");
  }
  std::ofstream out(path);
  if (!out) {
    throw IoError("cannot write " + path);
  }
  for (std::size_t i = 0; i < header.size(); ++i) {
    out << (i ? "," : "") << header[i];
  }
  out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index r = 0; r < data.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.cols(); ++c) {
      out << (c ? "," : "") << data(r, c);
    }
    out << '\n';
  }
  if (!out) {
    throw IoError("write failed for " + path);
  }
}

}  // namespace hetgp
