#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ias/core/error.hpp"
#include "ias/harness/table.hpp"

namespace ias::harness {

enum class PlotKind { lines, bars };

struct PlotStyle {
  PlotKind kind = PlotKind::lines;
  bool log_x = true;
  std::string x_label = "labelled examples";
  std::string y_label;  // defaults to the metric name
  int width = 640;
  int height = 400;
};

namespace detail {

inline const char* palette(std::size_t i) {
  static constexpr const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  return colors[i % 7];
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Point {
  double x, mean, lo, hi;
};

struct Series {
  std::string name;
  std::vector<Point> points;
};

inline double parse_number(const std::string& s, const std::string& column) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw PlotError("plot: column " + column + " holds a non-numeric value '" + s + "'");
  }
}

inline std::pair<double, double> padded(double lo, double hi) {
  if (!(hi > lo)) {
    const double pad = std::max(1e-6, std::abs(lo) * 0.1);
    return {lo - pad, hi + pad};
  }
  const double pad = (hi - lo) * 0.08;
  return {lo - pad, hi + pad};
}

inline std::string render(const std::string& metric, const std::vector<Series>& series, const PlotStyle& st) {
  const double left = 70, right = 150, top = 30, bottom = 50;
  const double pw = st.width - left - right, ph = st.height - top - bottom;
  double ylo = 1e300, yhi = -1e300, xlo = 1e300, xhi = -1e300;
  bool positive_x = true;
  for (const auto& s : series)
    for (const auto& p : s.points) {
      ylo = std::min({ylo, p.lo, p.mean});
      yhi = std::max({yhi, p.hi, p.mean});
      xlo = std::min(xlo, p.x);
      xhi = std::max(xhi, p.x);
      positive_x = positive_x && p.x > 0;
    }
  if (st.kind == PlotKind::bars) ylo = std::min(ylo, 0.0);
  std::tie(ylo, yhi) = padded(ylo, yhi);
  const bool logx = st.kind == PlotKind::lines && st.log_x && positive_x;
  auto tx = [&](double x) { return logx ? std::log10(x) : x; };
  double xa = tx(xlo), xb = tx(xhi);
  std::tie(xa, xb) = padded(xa, xb);
  auto px = [&](double x) { return left + (tx(x) - xa) / (xb - xa) * pw; };
  auto py = [&](double y) { return top + (yhi - y) / (yhi - ylo) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << st.width << "\" height=\"" << st.height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(pw) << "\" height=\"" << fmt(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = ylo + (yhi - ylo) * i / 4.0;
    o << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(py(y) + 4) << "\" text-anchor=\"end\">" << label(y)
      << "</text>\n";
    o << "<line x1=\"" << fmt(left) << "\" x2=\"" << fmt(left + pw) << "\" y1=\"" << fmt(py(y)) << "\" y2=\""
      << fmt(py(y)) << "\" stroke=\"#dddddd\"/>\n";
  }
  o << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"" << fmt(top - 10) << "\" text-anchor=\"middle\">"
    << escape(metric) << "</text>\n";
  o << "<text transform=\"translate(16," << fmt(top + ph / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(st.y_label.empty() ? metric : st.y_label) << "</text>\n";

  if (st.kind == PlotKind::lines) {
    std::vector<double> ticks;
    for (const auto& s : series)
      for (const auto& p : s.points) ticks.push_back(p.x);
    std::sort(ticks.begin(), ticks.end());
    ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
    for (double x : ticks)
      o << "<text x=\"" << fmt(px(x)) << "\" y=\"" << fmt(top + ph + 16) << "\" text-anchor=\"middle\">" << label(x)
        << "</text>\n";
    o << "<text x=\"" << fmt(left + pw / 2) << "\" y=\"" << fmt(top + ph + 38) << "\" text-anchor=\"middle\">"
      << escape(st.x_label) << (logx ? " (log scale)" : "") << "</text>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
      const auto& pts = series[k].points;
      const char* c = palette(k);
      if (pts.size() > 1) {
        o << "<polygon fill=\"" << c << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
        for (const auto& p : pts) o << fmt(px(p.x)) << ',' << fmt(py(p.hi)) << ' ';
        for (auto it = pts.rbegin(); it != pts.rend(); ++it) o << fmt(px(it->x)) << ',' << fmt(py(it->lo)) << ' ';
        o << "\"/>\n<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
        for (const auto& p : pts) o << fmt(px(p.x)) << ',' << fmt(py(p.mean)) << ' ';
        o << "\"/>\n";
      }
      for (const auto& p : pts) {
        o << "<line x1=\"" << fmt(px(p.x)) << "\" x2=\"" << fmt(px(p.x)) << "\" y1=\"" << fmt(py(p.lo)) << "\" y2=\""
          << fmt(py(p.hi)) << "\" stroke=\"" << c << "\"/>\n";
        o << "<circle cx=\"" << fmt(px(p.x)) << "\" cy=\"" << fmt(py(p.mean)) << "\" r=\"3.5\" fill=\"" << c
          << "\"/>\n";
      }
    }
  } else {
    const double slot = pw / static_cast<double>(series.size());
    for (std::size_t k = 0; k < series.size(); ++k) {
      const auto& p = series[k].points.front();
      const double x0 = left + slot * k + slot * 0.2, bw = slot * 0.6;
      const double y0 = py(std::max(0.0, p.mean)), y1 = py(std::min(0.0, p.mean));
      o << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y0) << "\" width=\"" << fmt(bw) << "\" height=\""
        << fmt(y1 - y0) << "\" fill=\"" << palette(k) << "\"/>\n";
      o << "<line x1=\"" << fmt(x0 + bw / 2) << "\" x2=\"" << fmt(x0 + bw / 2) << "\" y1=\"" << fmt(py(p.lo))
        << "\" y2=\"" << fmt(py(p.hi)) << "\" stroke=\"black\"/>\n";
    }
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const double y = top + 14 + 18.0 * k;
    o << "<rect x=\"" << fmt(left + pw + 12) << "\" y=\"" << fmt(y - 9) << "\" width=\"12\" height=\"12\" fill=\""
      << palette(k) << "\"/>\n";
    o << "<text x=\"" << fmt(left + pw + 30) << "\" y=\"" << fmt(y + 1) << "\">" << escape(series[k].name)
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace detail

// Writes one SVG per metric of a curve table (columns variant, x, metric,
// mean, lo, hi) to `dir/<stem>_<metric>.svg`; returns the files written.
inline std::vector<std::filesystem::path> plot(const Table& t, const PlotStyle& style, const std::filesystem::path& dir,
                                               const std::string& stem) {
  if (t.rows.empty()) throw PlotError("plot: empty table");
  int col[6];
  const char* names[6] = {"variant", "x", "metric", "mean", "lo", "hi"};
  for (int i = 0; i < 6; ++i) {
    col[i] = t.column(names[i]);
    if (col[i] < 0) throw PlotError(std::string("plot: missing column ") + names[i]);
  }
  std::vector<std::string> metrics;
  for (const auto& r : t.rows)
    if (std::find(metrics.begin(), metrics.end(), r[static_cast<std::size_t>(col[2])]) == metrics.end())
      metrics.push_back(r[static_cast<std::size_t>(col[2])]);
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& m : metrics) {
    std::vector<detail::Series> series;
    for (const auto& r : t.rows) {
      if (r[static_cast<std::size_t>(col[2])] != m) continue;
      const auto& v = r[static_cast<std::size_t>(col[0])];
      auto it = std::find_if(series.begin(), series.end(), [&](const auto& s) { return s.name == v; });
      if (it == series.end()) {
        series.push_back({v, {}});
        it = series.end() - 1;
      }
      const double mean = detail::parse_number(r[static_cast<std::size_t>(col[3])], "mean");
      if (!std::isfinite(mean)) continue;
      it->points.push_back({detail::parse_number(r[static_cast<std::size_t>(col[1])], "x"), mean,
                            detail::parse_number(r[static_cast<std::size_t>(col[4])], "lo"),
                            detail::parse_number(r[static_cast<std::size_t>(col[5])], "hi")});
    }
    std::erase_if(series, [](const auto& s) { return s.points.empty(); });
    if (series.empty()) continue;
    for (auto& s : series)
      std::stable_sort(s.points.begin(), s.points.end(), [](const auto& a, const auto& b) { return a.x < b.x; });
    files.emplace_back(stem + "_" + m + ".svg", detail::render(m, series, style));
  }
  if (files.empty()) throw PlotError("plot: no finite values to draw");
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> out;
  for (const auto& [name, svg] : files) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw PlotError("plot: cannot write " + (dir / name).string());
    f << svg;
    out.push_back(dir / name);
  }
  return out;
}

}  // namespace ias::harness
