#include "kopath/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "kopath/error.hpp"

namespace kopath {
namespace {

constexpr std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                 "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

std::string escape(const std::string& s) {
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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void pad() {
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
  }
};

}  // namespace

std::string render_plot(std::span<const Series> series, const PlotStyle& style) {
  if (series.empty()) fail(ErrorKind::EmptySeries, "no series to plot");
  Range xr, yr;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) fail(ErrorKind::EmptySeries, "series '" + s.label + "' has x and y of different lengths");
    if (s.x.empty()) fail(ErrorKind::EmptySeries, "series '" + s.label + "' is empty");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xr.add(s.x[i]);
      yr.add(s.y[i]);
    }
  }
  if (!(xr.lo <= xr.hi)) fail(ErrorKind::EmptySeries, "no finite points to plot");
  xr.pad();
  yr.pad();

  const double W = style.width, H = style.height;
  const double left = 64, right = 16, top = style.title.empty() ? 16 : 36, bottom = 48;
  const double pw = W - left - right, ph = H - top - bottom;
  auto px = [&](double x) { return left + (x - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double y) { return top + (1.0 - (y - yr.lo) / (yr.hi - yr.lo)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << style.width << "\" height=\"" << style.height
    << "\" viewBox=\"0 0 " << style.width << ' ' << style.height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!style.title.empty())
    o << "<text x=\"" << num(W / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(style.title)
      << "</text>\n";
  o << "<g stroke=\"black\" fill=\"none\">\n";
  o << "<line x1=\"" << num(left) << "\" y1=\"" << num(top + ph) << "\" x2=\"" << num(left + pw) << "\" y2=\""
    << num(top + ph) << "\"/>\n";
  o << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\"" << num(top + ph)
    << "\"/>\n";
  o << "</g>\n";
  constexpr int kTicks = 5;
  o << "<g fill=\"black\">\n";
  for (int i = 0; i <= kTicks; ++i) {
    const double xv = xr.lo + (xr.hi - xr.lo) * i / kTicks;
    const double yv = yr.lo + (yr.hi - yr.lo) * i / kTicks;
    o << "<text x=\"" << num(px(xv)) << "\" y=\"" << num(top + ph + 16) << "\" text-anchor=\"middle\">"
      << tick_label(xv) << "</text>\n";
    o << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(yv) + 4) << "\" text-anchor=\"end\">" << tick_label(yv)
      << "</text>\n";
  }
  o << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(H - 10) << "\" text-anchor=\"middle\">"
    << escape(style.x_label) << "</text>\n";
  o << "<text x=\"14\" y=\"" << num(top + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
    << num(top + ph / 2) << ")\">" << escape(style.y_label) << "</text>\n";
  o << "</g>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    std::string d;
    bool pen = false;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
        pen = false;
        continue;
      }
      d += (pen ? " L" : (d.empty() ? "M" : " M")) + num(px(s.x[i])) + ',' + num(py(s.y[i]));
      pen = true;
    }
    o << "<path d=\"" << d << "\" fill=\"none\" stroke=\"" << kPalette[k % kPalette.size()]
      << "\" stroke-width=\"1.5\"/>\n";
  }

  o << "<g>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const double y = top + 10 + 16.0 * static_cast<double>(k);
    o << "<line x1=\"" << num(left + pw - 120) << "\" y1=\"" << num(y) << "\" x2=\"" << num(left + pw - 100)
      << "\" y2=\"" << num(y) << "\" stroke=\"" << kPalette[k % kPalette.size()] << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << num(left + pw - 94) << "\" y=\"" << num(y + 4) << "\">" << escape(series[k].label)
      << "</text>\n";
  }
  o << "</g>\n</svg>\n";
  return o.str();
}

void emit_plot(std::span<const Series> series, const std::filesystem::path& path, const PlotStyle& style) {
  const std::string doc = render_plot(series, style);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out << doc;
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

}  // namespace kopath
