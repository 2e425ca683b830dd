#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "donorpl/io/config.hpp"

namespace donorpl::io {

struct XYData {
  std::vector<double> x, y;
  std::string x_label = "x", y_label = "y";
};

/// Reads the first two numeric columns of a whitespace- or comma-separated
/// file. '#' lines are comments; a non-numeric first row is a header.
inline XYData parse_xy_text(std::string_view text, const std::string& source = "data") {
  XYData d;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  bool seen_data = false;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    std::string a, b;
    row >> a >> b;
    const auto xa = parse_double(a);
    const auto yb = parse_double(b);
    if (!xa || !yb) {
      if (!seen_data && d.x.empty()) {
        d.x_label = a.empty() ? "x" : a;
        d.y_label = b.empty() ? "y" : b;
        seen_data = true;
        continue;
      }
      throw ParseError(source, line_no, "expected two numeric columns, got '" + trim(raw) + "'");
    }
    seen_data = true;
    d.x.push_back(*xa);
    d.y.push_back(*yb);
  }
  if (d.x.size() < 2) throw ParseError(source, 0, "need at least 2 data rows to plot");
  return d;
}

namespace detail {

inline std::vector<double> nice_ticks(double lo, double hi, int target = 6) {
  const double span = hi - lo;
  const double raw = span / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) t.push_back(std::abs(v) < 1e-12 * span ? 0.0 : v);
  return t;
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Minimal line chart as standalone SVG.
inline std::string svg_line_chart(const XYData& d, const std::string& title = "") {
  const double w = 720, h = 440, ml = 80, mr = 20, mt = 40, mb = 60;
  double x0 = *std::min_element(d.x.begin(), d.x.end());
  double x1 = *std::max_element(d.x.begin(), d.x.end());
  double y0 = *std::min_element(d.y.begin(), d.y.end());
  double y1 = *std::max_element(d.y.begin(), d.y.end());
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto sx = [&](double x) { return ml + (x - x0) / (x1 - x0) * (w - ml - mr); };
  auto sy = [&](double y) { return h - mb - (y - y0) / (y1 - y0) * (h - mt - mb); };

  std::ostringstream os;
  os << std::setprecision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
     << ' ' << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) os << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << detail::xml_escape(title) << "</text>\n";
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << w - ml - mr << "\" height=\"" << h - mt - mb
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double t : detail::nice_ticks(x0, x1)) {
    os << "<line x1=\"" << sx(t) << "\" y1=\"" << h - mb << "\" x2=\"" << sx(t) << "\" y2=\"" << h - mb + 5
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << sx(t) << "\" y=\"" << h - mb + 18 << "\" text-anchor=\"middle\">" << t << "</text>\n";
  }
  for (double t : detail::nice_ticks(y0, y1)) {
    os << "<line x1=\"" << ml - 5 << "\" y1=\"" << sy(t) << "\" x2=\"" << ml << "\" y2=\"" << sy(t)
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << ml - 8 << "\" y=\"" << sy(t) + 4 << "\" text-anchor=\"end\">" << t << "</text>\n";
  }
  os << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 15 << "\" text-anchor=\"middle\">" << detail::xml_escape(d.x_label) << "</text>\n";
  os << "<text x=\"18\" y=\"" << (mt + h - mb) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
     << (mt + h - mb) / 2 << ")\">" << detail::xml_escape(d.y_label) << "</text>\n";
  os << "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1.2\" points=\"";
  for (std::size_t i = 0; i < d.x.size(); ++i) os << (i ? " " : "") << sx(d.x[i]) << ',' << sy(d.y[i]);
  os << "\"/>\n</svg>\n";
  return os.str();
}

}  // namespace donorpl::io
