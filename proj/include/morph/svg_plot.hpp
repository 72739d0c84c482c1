#pragma once

#include "morph/io.hpp"

#include <string>
#include <vector>

namespace morph {

struct SvgSeries {
  std::string name;
  std::vector<double> x, y;
};

/// Static time-series chart. An empty series list yields the bare frame.
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<SvgSeries>& series);

/// Top-down XY path with footprint circles of the current radius every
/// `interval` seconds. Each circle carries data-radius (m) and data-t (s).
std::string svg_path_plot(const std::string& title, const NumericTable& samples, double interval = 0.5);

}  // namespace morph
