#pragma once

// Minimal standalone SVG line plots. Every plot written by the library has a
// sibling CSV holding the plotted numbers; the SVG is only a view of it.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "tmn/numeric.hpp"

namespace tmn::svg {

struct Series {
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#000000";
  double width = 1.0;
  std::string label;
  bool markers = false;
};

struct Plot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  bool equal_aspect = false;
  int width = 480;
  int height = 360;
};

/// Grey level for recency shading: index 0 (most recent) is black, the last is white.
inline std::string recency_grey(std::size_t i, std::size_t n) {
  const double f = n <= 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
  const int v = static_cast<int>(std::lround(235.0 * f));
  std::ostringstream os;
  os << "rgb(" << v << ',' << v << ',' << v << ')';
  return os.str();
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string render(const Plot& plot) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : plot.series) {
    if (s.x.size() != s.y.size()) throw ShapeError("svg: series x/y length mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double ml = 56, mr = 16, mt = 28, mb = 40;
  const double pw = plot.width - ml - mr;
  const double ph = plot.height - mt - mb;
  double sx = pw / (x1 - x0), sy = ph / (y1 - y0);
  if (plot.equal_aspect) sx = sy = std::min(sx, sy);
  auto px = [&](double x) { return ml + (x - x0) * sx; };
  auto py = [&](double y) { return mt + ph - (y - y0) * sy; };

  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << plot.width << "\" height=\"" << plot.height
     << "\" viewBox=\"0 0 " << plot.width << ' ' << plot.height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#888\"/>\n";
  os << "<text x=\"" << plot.width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << escape(plot.title)
     << "</text>\n";
  os << "<text x=\"" << plot.width / 2 << "\" y=\"" << plot.height - 8 << "\" text-anchor=\"middle\" font-size=\"11\">"
     << escape(plot.x_label) << "</text>\n";
  os << "<text x=\"12\" y=\"" << mt + ph / 2 << "\" font-size=\"11\" transform=\"rotate(-90 12 " << mt + ph / 2
     << ")\" text-anchor=\"middle\">" << escape(plot.y_label) << "</text>\n";
  os << "<text x=\"" << ml << "\" y=\"" << mt + ph + 14 << "\" font-size=\"9\">" << x0 << "</text>\n";
  os << "<text x=\"" << ml + pw << "\" y=\"" << mt + ph + 14 << "\" font-size=\"9\" text-anchor=\"end\">" << x1
     << "</text>\n";
  os << "<text x=\"" << ml - 4 << "\" y=\"" << mt + ph << "\" font-size=\"9\" text-anchor=\"end\">" << y0 << "</text>\n";
  os << "<text x=\"" << ml - 4 << "\" y=\"" << mt + 8 << "\" font-size=\"9\" text-anchor=\"end\">" << y1 << "</text>\n";
  for (const auto& s : plot.series) {
    if (s.x.empty()) continue;
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"" << s.width << "\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) os << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    os << "\"/>\n";
    if (s.markers) {
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        os << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"1.8\" fill=\"" << s.color << "\"/>\n";
      }
    }
  }
  double ly = mt + 12;
  for (const auto& s : plot.series) {
    if (s.label.empty()) continue;
    os << "<text x=\"" << ml + pw - 4 << "\" y=\"" << ly << "\" font-size=\"10\" text-anchor=\"end\" fill=\"" << s.color
       << "\">" << escape(s.label) << "</text>\n";
    ly += 12;
  }
  os << "</svg>\n";
  return os.str();
}

inline void write(const std::string& path, const Plot& plot) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << render(plot);
}

}  // namespace tmn::svg
