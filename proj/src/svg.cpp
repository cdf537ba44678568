#include "sharppath/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "sharppath/errors.hpp"

namespace sharppath::svg {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                          "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
                          "#bcbd22", "#e377c2"};
constexpr int kPaletteSize = 10;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Frame {
  double x0, x1, y0, y1; // data range
  int px0, px1, py0, py1; // pixel box (py0 = top)
  bool log_y;

  double tx(double x) const {
    if (x1 == x0) return 0.5 * (px0 + px1);
    return px0 + (x - x0) / (x1 - x0) * (px1 - px0);
  }
  double ty(double y) const {
    double a = y0, b = y1, v = y;
    if (log_y) {
      a = std::log10(y0);
      b = std::log10(y1);
      v = std::log10(std::max(y, 1e-300));
    }
    if (b == a) return 0.5 * (py0 + py1);
    return py1 - (v - a) / (b - a) * (py1 - py0);
  }
};

void axes(std::string& out, const Frame& f, const ChartOptions& opt) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "<rect x='%d' y='%d' width='%d' height='%d' fill='none' "
                "stroke='#333'/>\n",
                f.px0, f.py0, f.px1 - f.px0, f.py1 - f.py0);
  out += buf;
  // 5 ticks per axis
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double xpix = f.tx(xv);
    std::snprintf(buf, sizeof(buf),
                  "<line x1='%.1f' y1='%d' x2='%.1f' y2='%d' stroke='#333'/>"
                  "<text x='%.1f' y='%d' font-size='11' text-anchor='middle' "
                  "fill='#333'>%s</text>\n",
                  xpix, f.py1, xpix, f.py1 + 5, xpix, f.py1 + 18,
                  fmt(xv).c_str());
    out += buf;
    double yv;
    if (f.log_y) {
      const double la = std::log10(f.y0), lb = std::log10(f.y1);
      yv = std::pow(10.0, la + (lb - la) * i / 4.0);
    } else {
      yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    }
    const double ypix = f.ty(yv);
    std::snprintf(buf, sizeof(buf),
                  "<line x1='%d' y1='%.1f' x2='%d' y2='%.1f' stroke='#333'/>"
                  "<text x='%d' y='%.1f' font-size='11' text-anchor='end' "
                  "fill='#333'>%s</text>\n",
                  f.px0 - 5, ypix, f.px0, ypix, f.px0 - 8, ypix + 4,
                  fmt(yv).c_str());
    out += buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<text x='%d' y='%d' font-size='13' text-anchor='middle' "
                "fill='#111'>%s</text>\n",
                (f.px0 + f.px1) / 2, f.py1 + 36, opt.x_label.c_str());
  out += buf;
  std::snprintf(buf, sizeof(buf),
                "<text x='14' y='%d' font-size='13' text-anchor='middle' "
                "fill='#111' transform='rotate(-90 14 %d)'>%s</text>\n",
                (f.py0 + f.py1) / 2, (f.py0 + f.py1) / 2, opt.y_label.c_str());
  out += buf;
  std::snprintf(buf, sizeof(buf),
                "<text x='%d' y='20' font-size='15' text-anchor='middle' "
                "fill='#111'>%s</text>\n",
                (f.px0 + f.px1) / 2, opt.title.c_str());
  out += buf;
}

std::string header(const ChartOptions& opt) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "<svg xmlns='http://www.w3.org/2000/svg' width='%d' "
                "height='%d' viewBox='0 0 %d %d'>\n"
                "<rect width='%d' height='%d' fill='white'/>\n",
                opt.width, opt.height, opt.width, opt.height, opt.width,
                opt.height);
  return buf;
}

void legend(std::string& out, const std::vector<Series>& series,
            const Frame& f) {
  char buf[256];
  int y = f.py0 + 14;
  for (size_t s = 0; s < series.size(); ++s) {
    if (series[s].label.empty()) continue;
    std::snprintf(buf, sizeof(buf),
                  "<line x1='%d' y1='%d' x2='%d' y2='%d' stroke='%s' "
                  "stroke-width='2'/>"
                  "<text x='%d' y='%d' font-size='11' fill='#333'>%s</text>\n",
                  f.px1 - 150, y, f.px1 - 130, y,
                  kPalette[s % kPaletteSize], f.px1 - 124, y + 4,
                  series[s].label.c_str());
    out += buf;
    y += 16;
  }
}

} // namespace

std::string line_chart(const std::vector<Series>& series,
                       const ChartOptions& opt) {
  if (series.empty()) throw ConfigError("line chart needs at least one series");
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
  double y0 = x0, y1 = -x0;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (opt.log_y && y <= 0.0) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (!(x0 <= x1) || !(y0 <= y1))
    throw ConfigError("line chart has no plottable points");
  if (opt.baseline) {
    y0 = std::min(y0, opt.baseline_value);
    y1 = std::max(y1, opt.baseline_value);
  }
  if (y0 == y1) {
    y0 -= 0.5;
    y1 += 0.5;
  }

  Frame f{x0, x1, y0, y1, 60, opt.width - 20, 30, opt.height - 50, opt.log_y};
  std::string out = header(opt);
  axes(out, f, opt);
  char buf[128];
  if (opt.baseline) {
    std::snprintf(buf, sizeof(buf),
                  "<line x1='%d' y1='%.1f' x2='%d' y2='%.1f' stroke='#9467bd' "
                  "stroke-dasharray='6 3'/>\n",
                  f.px0, f.ty(opt.baseline_value), f.px1,
                  f.ty(opt.baseline_value));
    out += buf;
  }
  for (size_t s = 0; s < series.size(); ++s) {
    if (series[s].points.empty()) continue;
    out += "<polyline fill='none' stroke='";
    out += kPalette[s % kPaletteSize];
    out += "' stroke-width='1.6' points='";
    for (const auto& [x, y] : series[s].points) {
      if (opt.log_y && y <= 0.0) continue;
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", f.tx(x), f.ty(y));
      out += buf;
    }
    out += "'/>\n";
  }
  legend(out, series, f);
  out += "</svg>\n";
  return out;
}

std::string bar_chart(const std::vector<std::string>& group_labels,
                      const std::vector<Series>& series,
                      const ChartOptions& opt) {
  if (series.empty() || group_labels.empty())
    throw ConfigError("bar chart needs groups and series");
  double y0 = 0.0, y1 = 0.0;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  if (y0 == y1) y1 = y0 + 1.0;

  const int groups = static_cast<int>(group_labels.size());
  Frame f{0.0, static_cast<double>(groups), y0, y1,
          60, opt.width - 20, 30, opt.height - 50, false};
  std::string out = header(opt);
  char buf[512];
  const double zero_y = f.ty(0.0);
  std::snprintf(buf, sizeof(buf),
                "<rect x='%d' y='%d' width='%d' height='%d' fill='none' "
                "stroke='#333'/>\n",
                f.px0, f.py0, f.px1 - f.px0, f.py1 - f.py0);
  out += buf;
  const double group_w = static_cast<double>(f.px1 - f.px0) / groups;
  const double bar_w = group_w * 0.8 / static_cast<double>(series.size());
  for (int gidx = 0; gidx < groups; ++gidx) {
    for (size_t s = 0; s < series.size(); ++s) {
      if (gidx >= static_cast<int>(series[s].points.size())) continue;
      const double v = series[s].points[static_cast<size_t>(gidx)].second;
      const double x = f.px0 + gidx * group_w + group_w * 0.1 + s * bar_w;
      const double ytop = std::min(f.ty(v), zero_y);
      const double h = std::fabs(f.ty(v) - zero_y);
      std::snprintf(buf, sizeof(buf),
                    "<rect x='%.1f' y='%.1f' width='%.1f' height='%.1f' "
                    "fill='%s'/>\n",
                    x, ytop, bar_w, h, kPalette[s % kPaletteSize]);
      out += buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<text x='%.1f' y='%d' font-size='11' text-anchor='middle' "
                  "fill='#333'>%s</text>\n",
                  f.px0 + (gidx + 0.5) * group_w, f.py1 + 18,
                  group_labels[static_cast<size_t>(gidx)].c_str());
    out += buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<line x1='%d' y1='%.1f' x2='%d' y2='%.1f' stroke='#333'/>\n",
                f.px0, zero_y, f.px1, zero_y);
  out += buf;
  axes(out, f, opt);
  legend(out, series, f);
  out += "</svg>\n";
  return out;
}

} // namespace sharppath::svg
