#include "musedit/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "musedit/common.hpp"

namespace musedit {

namespace {
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                         "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};
}

void write_line_chart_svg(const std::string& path, const std::string& title,
                          const std::string& xlabel, const std::string& ylabel,
                          const std::vector<PlotSeries>& series, bool log_y) {
  const int W = 720, H = 440;
  const int ml = 70, mr = 20, mt = 40, mb = 50;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      double yv = s.y[i];
      if (log_y && yv <= 0) continue;
      if (log_y) yv = std::log10(yv);
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, yv);
      ymax = std::max(ymax, yv);
    }
  }
  if (!std::isfinite(xmin)) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
  auto py = [&](double y) {
    if (log_y) y = std::log10(std::max(y, 1e-300));
    return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb);
  };

  std::ofstream f(path);
  ME_CHECK(f.good(), "cannot open " + path);
  f << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
    << "' viewBox='0 0 " << W << " " << H << "'>\n";
  f << "<rect width='100%' height='100%' fill='white'/>\n";
  f << "<text x='" << W / 2 << "' y='22' text-anchor='middle' font-size='16'>" << title
    << "</text>\n";
  // axes
  f << "<line x1='" << ml << "' y1='" << H - mb << "' x2='" << W - mr << "' y2='"
    << H - mb << "' stroke='black'/>\n";
  f << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << H - mb
    << "' stroke='black'/>\n";
  char buf[64];
  for (int i = 0; i <= 4; ++i) {
    double xv = xmin + (xmax - xmin) * i / 4;
    double yv = ymin + (ymax - ymin) * i / 4;
    snprintf(buf, sizeof(buf), "%.4g", xv);
    f << "<text x='" << px(xv) << "' y='" << H - mb + 18
      << "' text-anchor='middle' font-size='11'>" << buf << "</text>\n";
    snprintf(buf, sizeof(buf), "%.4g", log_y ? std::pow(10.0, yv) : yv);
    double ypix = H - mb - (yv - ymin) / (ymax - ymin) * (H - mt - mb);
    f << "<text x='" << ml - 6 << "' y='" << ypix + 4
      << "' text-anchor='end' font-size='11'>" << buf << "</text>\n";
    f << "<line x1='" << ml << "' y1='" << ypix << "' x2='" << W - mr << "' y2='" << ypix
      << "' stroke='#dddddd'/>\n";
  }
  f << "<text x='" << (ml + W - mr) / 2 << "' y='" << H - 12
    << "' text-anchor='middle' font-size='13'>" << xlabel << "</text>\n";
  f << "<text x='16' y='" << (mt + H - mb) / 2
    << "' text-anchor='middle' font-size='13' transform='rotate(-90 16 "
    << (mt + H - mb) / 2 << ")'>" << ylabel << "</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kColors[si % 8];
    f << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (log_y && s.y[i] <= 0) continue;
      f << px(s.x[i]) << "," << py(s.y[i]) << " ";
    }
    f << "'/>\n";
    f << "<text x='" << W - mr - 8 << "' y='" << mt + 16 * (si + 1)
      << "' text-anchor='end' font-size='12' fill='" << color << "'>" << s.label
      << "</text>\n";
  }
  f << "</svg>\n";
}

}  // namespace musedit
