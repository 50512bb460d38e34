#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ias/core/error.hpp"

namespace ias::harness {

// Two-sided 95% Student-t quantile for `df` degrees of freedom.
inline double t_quantile_975(int df) {
  static constexpr double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
                                     2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
                                     2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
  if (df < 1) return 0.0;
  return df <= 30 ? table[df - 1] : 1.96;
}

struct Summary {
  double mean = 0.0, lo = 0.0, hi = 0.0, min = 0.0, max = 0.0;
  int n = 0;
};

// Mean with a 95% t interval (degenerate for a single value).
inline Summary summarize(const std::vector<double>& v) {
  Summary s;
  s.n = static_cast<int>(v.size());
  if (v.empty()) return s;
  s.min = s.max = v.front();
  for (double x : v) {
    s.mean += x;
    s.min = std::min(s.min, x);
    s.max = std::max(s.max, x);
  }
  s.mean /= s.n;
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  const double half = s.n > 1 ? t_quantile_975(s.n - 1) * std::sqrt(ss / (s.n - 1) / s.n) : 0.0;
  s.lo = s.mean - half;
  s.hi = s.mean + half;
  return s;
}

// One aggregated point: `metric` of `variant` at x over seeds.
struct CurveRow {
  std::string variant;
  double x = 0.0;
  std::string metric;
  Summary stats;
};

inline const char* curve_csv_header() { return "variant,x,metric,mean,lo,hi,min,max,n"; }

inline std::string format_number(double v) {
  std::ostringstream o;
  o.precision(10);
  o << v;
  return o.str();
}

// A string table with named columns, as read from CSV.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline Table curve_table(const std::vector<CurveRow>& rows) {
  Table t;
  std::stringstream header(curve_csv_header());
  for (std::string c; std::getline(header, c, ',');) t.columns.push_back(c);
  for (const auto& r : rows)
    t.rows.push_back({r.variant, format_number(r.x), r.metric, format_number(r.stats.mean), format_number(r.stats.lo),
                      format_number(r.stats.hi), format_number(r.stats.min), format_number(r.stats.max),
                      std::to_string(r.stats.n)});
  return t;
}

inline void write_csv(const Table& t, std::ostream& out) {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(t.columns);
  for (const auto& r : t.rows) line(r);
}

inline void write_csv(const Table& t, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_csv(t, out);
}

inline Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  Table t;
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string c; std::getline(ss, c, ',');) out.push_back(c);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (std::getline(in, line)) t.columns = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.columns.size()) throw DataError("csv: row width differs from header in " + path.string());
    t.rows.push_back(std::move(cells));
  }
  return t;
}

}  // namespace ias::harness
