#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <span>
#include <sstream>
#include <string>

#include "popstock/analytics.hpp"
#include "popstock/error.hpp"

namespace popstock::chart {

namespace detail {

inline std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// One panel at vertical offset `top`; z axis spans [min(z,-3), max(z,3)].
inline void panel(std::ostringstream& svg, const ZSeries& s, double top, double width, double height) {
  constexpr double left = 60, right = 20, pad = 30;
  const double plot_w = width - left - right, plot_h = height - 2 * pad;
  double lo = -3, hi = 3;
  for (double z : s.zscores) {
    lo = std::min(lo, z);
    hi = std::max(hi, z);
  }
  const auto x_of = [&](std::size_t i) {
    return left + (s.zscores.size() == 1 ? plot_w / 2
                                         : plot_w * static_cast<double>(i) /
                                               static_cast<double>(s.zscores.size() - 1));
  };
  const auto y_of = [&](double z) { return top + pad + plot_h * (hi - z) / (hi - lo); };

  svg << "<g id=\"region-" << s.region.str() << "\">\n";
  svg << "<text x=\"" << fixed2(left) << "\" y=\"" << fixed2(top + 18) << "\" font-size=\"14\">"
      << s.region.str() << " daily share z-score</text>\n";
  svg << "<line class=\"axis\" x1=\"" << fixed2(left) << "\" y1=\"" << fixed2(y_of(0)) << "\" x2=\""
      << fixed2(left + plot_w) << "\" y2=\"" << fixed2(y_of(0)) << "\" stroke=\"#888\"/>\n";
  svg << "<line class=\"band9\" x1=\"" << fixed2(left) << "\" y1=\"" << fixed2(y_of(2)) << "\" x2=\""
      << fixed2(left + plot_w) << "\" y2=\"" << fixed2(y_of(2))
      << "\" stroke=\"#1a9641\" stroke-dasharray=\"6,4\"/>\n";
  svg << "<text x=\"" << fixed2(left - 8) << "\" y=\"" << fixed2(y_of(2) + 4)
      << "\" font-size=\"10\" text-anchor=\"end\">z=2</text>\n";
  svg << "<text x=\"" << fixed2(left) << "\" y=\"" << fixed2(top + height - 8) << "\" font-size=\"10\">"
      << s.dates.front().iso() << "</text>\n";
  svg << "<text x=\"" << fixed2(left + plot_w) << "\" y=\"" << fixed2(top + height - 8)
      << "\" font-size=\"10\" text-anchor=\"end\">" << s.dates.back().iso() << "</text>\n";
  svg << "<polyline fill=\"none\" stroke=\"#2c7bb6\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < s.zscores.size(); ++i)
    svg << (i ? " " : "") << fixed2(x_of(i)) << ',' << fixed2(y_of(s.zscores[i]));
  svg << "\"/>\n</g>\n";
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out << content;
  if (!out) throw Error(ErrorCode::IoError, "write failed for '" + path + "'");
}

}  // namespace detail

/// z-score line chart with a dashed threshold at z = 2.
inline std::string render_chart(const ZSeries& series) {
  if (series.zscores.empty()) throw Error(ErrorCode::EmptySeries, "cannot chart an empty series");
  constexpr double width = 960, height = 320;
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"960\" height=\"320\" viewBox=\"0 0 960 320\">\n";
  detail::panel(svg, series, 0, width, height);
  svg << "</svg>\n";
  return svg.str();
}

/// Stacked panels, one per series.
inline std::string render_panels(std::span<const ZSeries> series) {
  if (series.empty()) throw Error(ErrorCode::EmptySeries, "no series to chart");
  constexpr double width = 960, height = 220;
  std::ostringstream svg;
  const auto total = static_cast<int>(height * static_cast<double>(series.size()));
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"960\" height=\"" << total
      << "\" viewBox=\"0 0 960 " << total << "\">\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series[i].zscores.empty()) throw Error(ErrorCode::EmptySeries, "empty series in panel set");
    detail::panel(svg, series[i], height * static_cast<double>(i), width, height);
  }
  svg << "</svg>\n";
  return svg.str();
}

inline void emit_chart(const ZSeries& series, const std::string& path) {
  detail::write_file(path, render_chart(series));
}

inline void emit_panels(std::span<const ZSeries> series, const std::string& path) {
  detail::write_file(path, render_panels(series));
}

}  // namespace popstock::chart
