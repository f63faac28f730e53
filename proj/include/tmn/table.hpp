#pragma once

// Plain comma-separated tables. Numbers are written with 17 significant
// digits so a re-read reproduces every double exactly.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tmn/numeric.hpp"

namespace tmn {

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row) {
    if (row.size() != columns.size()) throw ShapeError("Table: row width differs from header");
    rows.push_back(std::move(row));
  }

  std::size_t column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return i;
    }
    throw DataError("table has no column '" + name + "'");
  }

  /// Numeric view of one column; non-numeric cells are an error.
  std::vector<double> numeric_column(std::size_t c) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) {
      try {
        std::size_t used = 0;
        out.push_back(std::stod(r.at(c), &used));
        if (used != r[c].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw DataError("table column '" + columns.at(c) + "' has non-numeric cell '" + r.at(c) + "'");
      }
    }
    return out;
  }

  bool is_numeric(std::size_t c) const {
    try {
      numeric_column(c);
      return !rows.empty();
    } catch (const DataError&) {
      return false;
    }
  }

  void write(std::ostream& out) const {
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
      out << '\n';
    };
    line(columns);
    for (const auto& r : rows) line(r);
  }

  void write_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    write(out);
  }

  static Table read(std::istream& in) {
    Table t;
    std::string line;
    auto split = [](const std::string& s) {
      std::vector<std::string> cells;
      std::string cell;
      std::stringstream ss(s);
      while (std::getline(ss, cell, ',')) cells.push_back(cell);
      if (!s.empty() && s.back() == ',') cells.emplace_back();
      return cells;
    };
    if (!std::getline(in, line)) throw DataError("table: empty input");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.columns = split(line);
    std::size_t n = 1;
    while (std::getline(in, line)) {
      ++n;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto cells = split(line);
      if (cells.size() != t.columns.size()) throw DataError("table line " + std::to_string(n) + ": wrong cell count");
      t.rows.push_back(std::move(cells));
    }
    return t;
  }

  static Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return read(in);
  }
};

}  // namespace tmn
