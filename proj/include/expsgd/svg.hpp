#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace expsgd {

/// One curve: points plus an optional lo/hi band (mean +- std across seeds).
struct PlotSeries {
  std::string label;
  std::string color;
  std::vector<double> x, y;
  std::vector<double> y_lo, y_hi;  // same length as x when non-empty
};

struct PlotSpec {
  std::string title, xlabel, ylabel;
  bool log_x = true;
  bool log_y = false;
  int width = 560, height = 420;
};

namespace detail {

inline std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Axis {
  double lo = 0, hi = 1;
  bool log = false;

  double map(double v, double pix_lo, double pix_hi) const {
    const double a = log ? std::log10(lo) : lo;
    const double b = log ? std::log10(hi) : hi;
    const double t = ((log ? std::log10(v) : v) - a) / (b - a);
    return pix_lo + t * (pix_hi - pix_lo);
  }

  std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      for (int e = static_cast<int>(std::floor(std::log10(lo)));
           e <= static_cast<int>(std::ceil(std::log10(hi))); ++e) {
        const double v = std::pow(10.0, e);
        if (v >= lo * 0.999 && v <= hi * 1.001) out.push_back(v);
      }
      return out;
    }
    const double span = hi - lo;
    const double raw = span / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
      if (raw <= m * mag) {
        step = m * mag;
        break;
      }
    }
    const double first = std::ceil(lo / step) * step;
    for (double v = first; v <= hi + 1e-9 * span; v += step) out.push_back(v);
    return out;
  }
};

}  // namespace detail

/// Renders a line plot with optional bands to a standalone SVG document.
/// Output is a pure function of the inputs (fixed formatting, no clock).
inline std::string render_line_plot(const PlotSpec& spec,
                                    const std::vector<PlotSeries>& series) {
  using detail::fmt6;
  const double ml = 62, mr = 16, mt = 34, mb = 46;  // margins
  const double x0 = ml, x1 = spec.width - mr;
  const double y0 = spec.height - mb, y1 = mt;  // svg y grows downward

  detail::Axis ax{std::numeric_limits<double>::infinity(),
                  -std::numeric_limits<double>::infinity(), spec.log_x};
  detail::Axis ay{std::numeric_limits<double>::infinity(),
                  -std::numeric_limits<double>::infinity(), spec.log_y};
  const auto usable = [&](double v, bool log) {
    return std::isfinite(v) && (!log || v > 0.0);
  };
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], spec.log_x) || !usable(s.y[i], spec.log_y)) continue;
      ax.lo = std::min(ax.lo, s.x[i]);
      ax.hi = std::max(ax.hi, s.x[i]);
      ay.lo = std::min(ay.lo, s.y[i]);
      ay.hi = std::max(ay.hi, s.y[i]);
      if (!s.y_lo.empty() && usable(s.y_lo[i], spec.log_y)) ay.lo = std::min(ay.lo, s.y_lo[i]);
      if (!s.y_hi.empty() && usable(s.y_hi[i], spec.log_y)) ay.hi = std::max(ay.hi, s.y_hi[i]);
    }
  }
  if (!(ax.lo < ax.hi)) {
    ax.lo = spec.log_x ? 1.0 : 0.0;
    ax.hi = spec.log_x ? 10.0 : 1.0;
  }
  if (!(ay.lo < ay.hi)) {
    const double pad = std::abs(ay.lo) * 0.1 + 1e-6;
    ay.lo -= pad;
    ay.hi += pad;
  }
  if (!spec.log_y) {
    const double pad = 0.05 * (ay.hi - ay.lo);
    ay.lo -= pad;
    ay.hi += pad;
  }

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << spec.width << "\" height=\""
      << spec.height << "\" viewBox=\"0 0 " << spec.width << ' ' << spec.height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << (spec.width / 2) << "\" y=\"20\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"14\">" << spec.title << "</text>\n";

  // Axes and ticks.
  svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
      << "\" stroke=\"black\"/>\n";
  for (double t : ax.ticks()) {
    const double px = ax.map(t, x0, x1);
    svg << "<line x1=\"" << fmt6(px) << "\" y1=\"" << y0 << "\" x2=\"" << fmt6(px) << "\" y2=\""
        << (y0 + 4) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << fmt6(px) << "\" y=\"" << (y0 + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt6(t)
        << "</text>\n";
  }
  for (double t : ay.ticks()) {
    const double py = ay.map(t, y0, y1);
    svg << "<line x1=\"" << (x0 - 4) << "\" y1=\"" << fmt6(py) << "\" x2=\"" << x0 << "\" y2=\""
        << fmt6(py) << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << (x0 - 8) << "\" y=\"" << fmt6(py + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt6(t)
        << "</text>\n";
  }
  svg << "<text x=\"" << ((x0 + x1) / 2) << "\" y=\"" << (spec.height - 10)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << spec.xlabel
      << "</text>\n";
  svg << "<text x=\"16\" y=\"" << ((y0 + y1) / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
      << "transform=\"rotate(-90 16 " << ((y0 + y1) / 2) << ")\">" << spec.ylabel << "</text>\n";

  const auto point_ok = [&](const PlotSeries& s, std::size_t i, bool band) {
    if (!usable(s.x[i], spec.log_x) || !usable(s.y[i], spec.log_y)) return false;
    if (band && (!usable(s.y_lo[i], spec.log_y) || !usable(s.y_hi[i], spec.log_y))) return false;
    return true;
  };

  for (const auto& s : series) {
    if (!s.y_lo.empty() && !s.y_hi.empty()) {
      std::ostringstream pts;
      bool any = false;
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!point_ok(s, i, true)) continue;
        pts << fmt6(ax.map(s.x[i], x0, x1)) << ',' << fmt6(ay.map(s.y_hi[i], y0, y1)) << ' ';
        any = true;
      }
      for (std::size_t i = s.x.size(); i-- > 0;) {
        if (!point_ok(s, i, true)) continue;
        pts << fmt6(ax.map(s.x[i], x0, x1)) << ',' << fmt6(ay.map(s.y_lo[i], y0, y1)) << ' ';
      }
      if (any) {
        svg << "<polygon points=\"" << pts.str() << "\" fill=\"" << s.color
            << "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
      }
    }
    std::ostringstream pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!point_ok(s, i, false)) continue;
      pts << fmt6(ax.map(s.x[i], x0, x1)) << ',' << fmt6(ay.map(s.y[i], y0, y1)) << ' ';
    }
    svg << "<polyline points=\"" << pts.str() << "\" fill=\"none\" stroke=\"" << s.color
        << "\" stroke-width=\"1.6\"/>\n";
  }

  // Legend, top-right corner.
  double ly = y1 + 12;
  for (const auto& s : series) {
    svg << "<line x1=\"" << (x1 - 130) << "\" y1=\"" << fmt6(ly - 4) << "\" x2=\"" << (x1 - 106)
        << "\" y2=\"" << fmt6(ly - 4) << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << (x1 - 100) << "\" y=\"" << fmt6(ly)
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label << "</text>\n";
    ly += 16;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace expsgd
