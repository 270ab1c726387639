#pragma once

#include <string>
#include <vector>

namespace grpboost {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  /// Optional band drawn as a shaded polygon behind the line.
  std::vector<double> lower;
  std::vector<double> upper;
  bool points = false;  // markers instead of a line
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<PlotSeries> series;
  bool identity_line = false;
};

/// Standalone SVG document. The plotted numbers are embedded as CSV in a
/// <metadata> element.
std::string svg_line_plot(const PlotSpec& spec);

struct BoxStats {
  std::string label;
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
  double truth = 0.0;  // drawn as a marker; NaN hides it
};

BoxStats box_stats(const std::string& label, std::vector<double> values, double truth);

std::string svg_boxplot(const std::string& title, const std::string& y_label, const std::vector<BoxStats>& boxes);

}  // namespace grpboost
