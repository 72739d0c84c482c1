#include "morph/io.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace morph {

int NumericTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

NumericTable read_numeric_csv(std::istream& in) {
  NumericTable t;
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw ParseError("CSV has no header row");
  if (line.back() == '\r') line.pop_back();
  t.header = split(line);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != t.header.size())
      throw ParseError(fmt::format("CSV line {}: expected {} cells, got {}", lineno, t.header.size(), cells.size()));
    std::vector<double> row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (cells[i].empty()) {
        row[i] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      std::size_t used = 0;
      try {
        row[i] = std::stod(cells[i], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[i].size()) throw ParseError(fmt::format("CSV line {}: '{}' is not a number", lineno, cells[i]));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

NumericTable read_numeric_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open '{}'", path));
  return read_numeric_csv(in);
}

PiecewiseTrajectory trajectory_from_samples(const NumericTable& table) {
  static const char* kColumns[12] = {"x", "y", "z", "r", "vx", "vy", "vz", "vr", "ax", "ay", "az", "ar"};
  const int tc = table.column("t");
  if (tc < 0) throw ParseError("trajectory CSV lacks a 't' column");
  int cols[12];
  for (int i = 0; i < 12; ++i) {
    cols[i] = table.column(kColumns[i]);
    if (cols[i] < 0) throw ParseError(fmt::format("trajectory CSV lacks column '{}'", kColumns[i]));
  }
  if (table.rows.size() < 2) throw ParseError("trajectory CSV needs at least two samples");
  std::vector<PieceCoeffs> pieces;
  std::vector<double> durations;
  for (std::size_t k = 0; k + 1 < table.rows.size(); ++k) {
    const auto& r0 = table.rows[k];
    const auto& r1 = table.rows[k + 1];
    const double h = r1[tc] - r0[tc];
    if (!(h > 0.0)) throw ParseError("trajectory CSV times must increase");
    PieceCoeffs c;
    for (int ch = 0; ch < 4; ++ch) {
      const double p0 = r0[cols[ch]], v0 = r0[cols[4 + ch]], a0 = r0[cols[8 + ch]];
      const double p1 = r1[cols[ch]], v1 = r1[cols[4 + ch]], a1 = r1[cols[8 + ch]];
      const double h2 = h * h, h3 = h2 * h, h4 = h3 * h, h5 = h4 * h;
      c(0, ch) = p0;
      c(1, ch) = v0;
      c(2, ch) = 0.5 * a0;
      c(3, ch) = (20.0 * (p1 - p0) - (8.0 * v1 + 12.0 * v0) * h - (3.0 * a0 - a1) * h2) / (2.0 * h3);
      c(4, ch) = (30.0 * (p0 - p1) + (14.0 * v1 + 16.0 * v0) * h + (3.0 * a0 - 2.0 * a1) * h2) / (2.0 * h4);
      c(5, ch) = (12.0 * (p1 - p0) - 6.0 * (v1 + v0) * h - (a0 - a1) * h2) / (2.0 * h5);
    }
    if (!c.allFinite()) throw ParseError("trajectory CSV contains non-finite samples");
    pieces.push_back(c);
    durations.push_back(h);
  }
  return PiecewiseTrajectory(std::move(pieces), std::move(durations));
}

PiecewiseTrajectory load_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open '{}'", path));
  std::string first;
  std::getline(in, first);
  in.clear();
  in.seekg(0);
  try {
    if (first.rfind("t,", 0) == 0) return trajectory_from_samples(read_numeric_csv(in));
    return PiecewiseTrajectory::read_coefficients(in);
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(fmt::format("{}: {}", path, e.what()));
  }
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path));
  out << content;
  if (!out) throw std::runtime_error(fmt::format("write failed for '{}'", path));
}

}  // namespace morph
