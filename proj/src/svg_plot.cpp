#include "morph/svg_plot.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace morph {

namespace {

constexpr double kWidth = 640.0, kHeight = 420.0, kPad = 50.0;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '&':
        out += "&amp;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

struct Frame {
  double x0 = 0.0, x1 = 1.0, y0 = 0.0, y1 = 1.0;
  double sx = 1.0, sy = 1.0, ox = kPad, oy = kPad;

  void fit(bool equal_aspect) {
    if (!(x1 > x0)) x0 -= 0.5, x1 += 0.5;
    if (!(y1 > y0)) y0 -= 0.5, y1 += 0.5;
    sx = (kWidth - 2.0 * kPad) / (x1 - x0);
    sy = (kHeight - 2.0 * kPad) / (y1 - y0);
    if (equal_aspect) sx = sy = std::min(sx, sy);
  }
  double px(double x) const { return ox + (x - x0) * sx; }
  double py(double y) const { return kHeight - oy - (y - y0) * sy; }
};

std::string header(const std::string& title) {
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\">\n",
      kWidth, kHeight, kWidth, kHeight);
  s += fmt::format("<rect x=\"0\" y=\"0\" width=\"{:.0f}\" height=\"{:.0f}\" fill=\"white\"/>\n", kWidth, kHeight);
  s += fmt::format("<text x=\"{:.1f}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">{}</text>\n",
                   kWidth / 2.0, escape(title));
  return s;
}

std::string axes(const Frame& f, const std::string& x_label, const std::string& y_label) {
  std::string s = fmt::format(
      "<rect class=\"frame\" x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" stroke=\"#444\"/>\n",
      kPad, kPad, kWidth - 2.0 * kPad, kHeight - 2.0 * kPad);
  s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
                   kWidth / 2.0, kHeight - 12.0, escape(x_label));
  s += fmt::format(
      "<text x=\"14\" y=\"{:.1f}\" transform=\"rotate(-90 14 {:.1f})\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      "font-size=\"12\">{}</text>\n",
      kHeight / 2.0, kHeight / 2.0, escape(y_label));
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">{:.3g}</text>\n",
                     f.px(xv), kHeight - kPad + 14.0, xv);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{:.3g}</text>\n",
                     kPad - 4.0, f.py(yv) + 3.0, yv);
  }
  return s;
}

std::string polyline(const Frame& f, const std::vector<double>& x, const std::vector<double>& y, const char* color,
                     const std::string& name) {
  std::string pts;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) continue;
    pts += fmt::format("{:.2f},{:.2f} ", f.px(x[i]), f.py(y[i]));
  }
  if (!pts.empty()) pts.pop_back();
  return fmt::format("<polyline class=\"series\" data-name=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                     escape(name), color, pts);
}

}  // namespace

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<SvgSeries>& series) {
  Frame f;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (std::isfinite(x0)) {
    const double margin = 0.05 * std::max(y1 - y0, 1e-9);
    f.x0 = x0, f.x1 = x1, f.y0 = y0 - margin, f.y1 = y1 + margin;
  }
  f.fit(false);
  std::string out = header(title) + axes(f, x_label, y_label);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kColors[k % std::size(kColors)];
    out += polyline(f, series[k].x, series[k].y, color, series[k].name);
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{}\">{}</text>\n",
                       kWidth - kPad - 120.0, kPad + 14.0 + 14.0 * k, color, escape(series[k].name));
  }
  out += "</svg>\n";
  return out;
}

std::string svg_path_plot(const std::string& title, const NumericTable& samples, double interval) {
  const int ct = samples.column("t"), cx = samples.column("x"), cy = samples.column("y"), cr = samples.column("r");
  std::vector<double> t, x, y, r;
  if (ct >= 0 && cx >= 0 && cy >= 0) {
    for (const auto& row : samples.rows) {
      t.push_back(row[ct]);
      x.push_back(row[cx]);
      y.push_back(row[cy]);
      r.push_back(cr >= 0 ? row[cr] : 0.0);
    }
  }
  Frame f;
  if (!x.empty()) {
    const double rmax = *std::max_element(r.begin(), r.end());
    f.x0 = *std::min_element(x.begin(), x.end()) - rmax;
    f.x1 = *std::max_element(x.begin(), x.end()) + rmax;
    f.y0 = *std::min_element(y.begin(), y.end()) - rmax;
    f.y1 = *std::max_element(y.begin(), y.end()) + rmax;
  }
  f.fit(true);
  std::string out = header(title) + axes(f, "x (m)", "y (m)");
  if (!x.empty()) {
    out += polyline(f, x, y, kColors[0], "path");
    double next = t.front();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const bool last = i + 1 == t.size();
      if (t[i] + 1e-9 < next && !last) continue;
      out += fmt::format(
          "<circle class=\"footprint\" cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"{:.2f}\" data-radius=\"{:.6f}\" data-t=\"{:.3f}\" "
          "fill=\"none\" stroke=\"{}\" stroke-width=\"1\"/>\n",
          f.px(x[i]), f.py(y[i]), r[i] * f.sx, r[i], t[i], kColors[1]);
      next += interval;
    }
  }
  out += "</svg>\n";
  return out;
}

}  // namespace morph
