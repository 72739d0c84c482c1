#pragma once

#include "morph/trajectory.hpp"

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace morph {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NumericTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const;  // -1 when absent
};

/// Header row plus numeric rows; every row must have the header's width.
/// Empty cells read as NaN.
NumericTable read_numeric_csv(std::istream& in);
NumericTable read_numeric_csv_file(const std::string& path);

/// Quintic Hermite interpolation through exported (t, value, 1st, 2nd
/// derivative) samples; reproduces a C2 piecewise quintic sampled at its knots.
PiecewiseTrajectory trajectory_from_samples(const NumericTable& table);

/// Reads either a coefficient dump or a sample CSV.
PiecewiseTrajectory load_trajectory(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace morph
