#pragma once

// Minimal SVG line chart of eclipse curves.

#include <eclipse/sim/metrics.hpp>

#include <algorithm>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace eclipse::sim {

struct PlotSeries {
  std::string label;
  std::string color;
  std::vector<std::pair<double, double>> points;  // (minutes, probability)
};

inline std::vector<PlotSeries> curve_series(const EclipseCurve& c, const std::string& prefix = {}) {
  PlotSeries ecl{prefix + "P(fully eclipsed)", "#c0392b", {}};
  PlotSeries sup{prefix + "P(swarm < 10 honest)", "#2471a3", {}};
  for (const auto& p : c.points) {
    const double m = static_cast<double>(p.t) / 60.0;
    ecl.points.emplace_back(m, p.p_fully_eclipsed);
    sup.points.emplace_back(m, p.p_swarm_below_10);
  }
  return {ecl, sup};
}

inline void write_svg(std::ostream& out, const std::vector<PlotSeries>& series, const std::string& title) {
  const double w = 720, h = 420, left = 60, right = 20, top = 40, bottom = 50;
  double xmax = 1;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) xmax = std::max(xmax, x);
  const auto px = [&](double x) { return left + (w - left - right) * x / xmax; };
  const auto py = [&](double y) { return h - bottom - (h - top - bottom) * y; };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
      << ' ' << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
      << title << "</text>\n";
  for (int i = 0; i <= 10; ++i) {
    const double y = i / 10.0;
    out << "<line x1=\"" << left << "\" x2=\"" << w - right << "\" y1=\"" << py(y) << "\" y2=\"" << py(y)
        << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << left - 6 << "\" y=\"" << py(y) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << y << "</text>\n";
  }
  const int xticks = 10;
  for (int i = 0; i <= xticks; ++i) {
    const double x = xmax * i / xticks;
    std::ostringstream lbl;
    lbl.precision(3);
    lbl << x;
    out << "<text x=\"" << px(x) << "\" y=\"" << h - bottom + 16
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << lbl.str() << "</text>\n";
  }
  out << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">minutes since attack start</text>\n";
  out << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << w - left - right << "\" height=\""
      << h - top - bottom << "\" fill=\"none\" stroke=\"#333\"/>\n";
  int row = 0;
  for (const auto& s : series) {
    out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : s.points) out << px(x) << ',' << py(y) << ' ';
    out << "\"/>\n";
    const double ly = top + 16 + 16 * row++;
    out << "<line x1=\"" << left + 10 << "\" x2=\"" << left + 30 << "\" y1=\"" << ly << "\" y2=\"" << ly
        << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << left + 36 << "\" y=\"" << ly + 4 << "\" font-family=\"sans-serif\" font-size=\"12\">"
        << s.label << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace eclipse::sim
