#pragma once

#include <string>
#include <utility>
#include <vector>

namespace sharppath::svg {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

struct ChartOptions {
  std::string title;
  std::string x_label, y_label;
  bool log_y = false;
  int width = 720, height = 440;
  bool baseline = false;      // horizontal reference line
  double baseline_value = 0.0;
  std::string baseline_label;
};

/// Multi-series line chart. Every plotted number comes straight from the
/// caller's points; no smoothing.
std::string line_chart(const std::vector<Series>& series,
                       const ChartOptions& opt);

/// Grouped bars: one group per label, one bar per series.
std::string bar_chart(const std::vector<std::string>& group_labels,
                      const std::vector<Series>& series,
                      const ChartOptions& opt);

} // namespace sharppath::svg
