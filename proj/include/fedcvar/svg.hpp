#pragma once

// Self-contained SVG charts: line charts with an optional smoothed overlay,
// bar charts, and 2-D decision-region plots.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fedcvar/data.hpp"
#include "fedcvar/numerics.hpp"

namespace fedcvar::svg {

/// Trailing moving average; window 1 returns the input.
std::vector<double> moving_average(std::span<const double> values, std::size_t window);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color;
  double opacity = 1.0;
  double width = 1.5;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  bool fixed_unit_range = false;  // pin the y axis to [0, 1]
};

/// Adds the raw series faded plus its smoothed copy on top.
void add_raw_and_smoothed(LineChart& chart, const std::string& label, std::vector<double> x,
                          const std::vector<double>& y, const std::string& color,
                          std::size_t window);

std::string render_line_chart(const LineChart& chart);

std::string render_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                             const std::vector<double>& values);

/// Argmax regions of `theta` over the bounding box of `points` on a
/// resolution x resolution grid, with the points overlaid by label.
std::string render_decision_regions(const std::string& title, const ModelParams& theta,
                                    const Dataset& points, std::size_t resolution = 120);

/// Colour used for class / series index i.
std::string palette(std::size_t i);

}  // namespace fedcvar::svg
