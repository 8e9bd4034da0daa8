#pragma once

#include <string>
#include <vector>

namespace musedit {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Minimal static line chart writer (SVG). Used for loss curves, benchmark
// curves and multi-round metric trends.
void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::string& xlabel, const std::string& ylabel,
                          const std::vector<PlotSeries>& series,
                          bool log_y = false);

}  // namespace musedit
