#include "fedcvar/svg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "fedcvar/error.hpp"

namespace fedcvar::svg {
namespace {

constexpr double kWidth = 720, kHeight = 420;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 55;

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Round step for roughly `target` intervals across [lo, hi].
double nice_step(double lo, double hi, int target) {
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double f = raw / mag;
  const double nice = f < 1.5 ? 1 : f < 3 ? 2 : f < 7 ? 5 : 10;
  return nice * mag;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!(lo <= hi)) lo = 0, hi = 1;
    if (hi - lo < 1e-12) {
      const double pad = std::max(std::abs(lo) * 0.05, 0.5);
      lo -= pad;
      hi += pad;
    }
  }
};

std::string header(double w, double h) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} "
      "{1}\" font-family=\"sans-serif\" font-size=\"12\">\n"
      "<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n",
      w, h);
}

std::string axes(const std::string& title, const std::string& xl, const std::string& yl,
                 const Range& xr, const Range& yr) {
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  std::string s;
  s += fmt::format("<text x=\"{}\" y=\"22\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
                   kLeft + pw / 2, escape(title));
  s += fmt::format(
      "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
      kLeft, kTop, pw, ph);
  auto tick = [](double v, double step) {
    return fmt::format("{:.{}f}", v, step >= 1 ? 0 : static_cast<int>(std::ceil(-std::log10(step))));
  };
  const double xs = nice_step(xr.lo, xr.hi, 6);
  for (double v = std::ceil(xr.lo / xs) * xs; v <= xr.hi + 1e-9 * xs; v += xs) {
    const double px = kLeft + (v - xr.lo) / (xr.hi - xr.lo) * pw;
    s += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1}\" x2=\"{0:.2f}\" y2=\"{2}\" stroke=\"#ddd\"/>\n",
                     px, kTop, kTop + ph);
    s += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", px,
                     kTop + ph + 16, tick(v, xs));
  }
  const double ys = nice_step(yr.lo, yr.hi, 5);
  for (double v = std::ceil(yr.lo / ys) * ys; v <= yr.hi + 1e-9 * ys; v += ys) {
    const double py = kTop + ph - (v - yr.lo) / (yr.hi - yr.lo) * ph;
    s += fmt::format("<line x1=\"{0}\" y1=\"{1:.2f}\" x2=\"{2}\" y2=\"{1:.2f}\" stroke=\"#ddd\"/>\n",
                     kLeft, py, kLeft + pw);
    s += fmt::format("<text x=\"{}\" y=\"{:.2f}\" text-anchor=\"end\">{}</text>\n", kLeft - 6,
                     py + 4, tick(v, ys));
  }
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", kLeft + pw / 2,
                   kHeight - 14, escape(xl));
  s += fmt::format(
      "<text x=\"18\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0})\">{1}</text>\n",
      kTop + ph / 2, escape(yl));
  return s;
}

}  // namespace

std::string palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[i % 10];
}

std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  if (window == 0) throw InvalidArgument("smoothing window must be positive");
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    const std::size_t n = std::min(i + 1, window);
    out[i] = window == 1 ? values[i] : sum / static_cast<double>(n);
  }
  return out;
}

void add_raw_and_smoothed(LineChart& chart, const std::string& label, std::vector<double> x,
                          const std::vector<double>& y, const std::string& color,
                          std::size_t window) {
  chart.series.push_back({label + " (raw)", x, y, color, 0.3, 1.0});
  chart.series.push_back({label, std::move(x), moving_average(y, window), color, 1.0, 2.0});
}

std::string render_line_chart(const LineChart& chart) {
  Range xr, yr;
  for (const auto& s : chart.series) {
    for (double v : s.x) xr.add(v);
    for (double v : s.y) yr.add(v);
  }
  if (chart.fixed_unit_range) yr.lo = 0, yr.hi = 1;
  xr.settle();
  yr.settle();
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (v - xr.lo) / (xr.hi - xr.lo) * pw; };
  auto py = [&](double v) { return kTop + ph - (v - yr.lo) / (yr.hi - yr.lo) * ph; };

  std::string s = header(kWidth, kHeight);
  s += axes(chart.title, chart.x_label, chart.y_label, xr, yr);
  std::size_t legend = 0;
  for (const auto& series : chart.series) {
    const std::size_t n = std::min(series.x.size(), series.y.size());
    std::string points;
    std::size_t drawn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(series.y[i])) continue;
      points += fmt::format("{:.2f},{:.2f} ", px(series.x[i]), py(series.y[i]));
      ++drawn;
    }
    if (drawn == 1) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(series.y[i])) continue;
        s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3.5\" fill=\"{}\" fill-opacity=\"{}\"/>\n",
                         px(series.x[i]), py(series.y[i]), series.color, series.opacity);
      }
    } else if (drawn > 1) {
      points.pop_back();
      s += fmt::format(
          "<polyline fill=\"none\" stroke=\"{}\" stroke-opacity=\"{}\" stroke-width=\"{}\" "
          "points=\"{}\"/>\n",
          series.color, series.opacity, series.width, points);
    }
    if (series.opacity >= 1.0) {
      const double ly = kTop + 10 + 18 * static_cast<double>(legend++);
      s += fmt::format(
          "<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>\n",
          kWidth - kRight + 12, ly, kWidth - kRight + 32, series.color);
      s += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", kWidth - kRight + 38, ly + 4,
                       escape(series.label));
    }
  }
  s += "</svg>\n";
  return s;
}

std::string render_bar_chart(const std::string& title, const std::vector<std::string>& labels,
                             const std::vector<double>& values) {
  Range yr{0.0, 0.0};
  for (double v : values) yr.add(v);
  yr.lo = 0.0;
  yr.settle();
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  std::string s = header(kWidth, kHeight);
  s += fmt::format("<text x=\"{}\" y=\"22\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
                   kLeft + pw / 2, escape(title));
  s += fmt::format(
      "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n", kLeft,
      kTop, pw, ph);
  const double ys = nice_step(yr.lo, yr.hi, 5);
  for (double v = 0; v <= yr.hi + 1e-9 * ys; v += ys) {
    const double y = kTop + ph - v / yr.hi * ph;
    s += fmt::format("<line x1=\"{0}\" y1=\"{1:.2f}\" x2=\"{2}\" y2=\"{1:.2f}\" stroke=\"#ddd\"/>\n",
                     kLeft, y, kLeft + pw);
    s += fmt::format("<text x=\"{}\" y=\"{:.2f}\" text-anchor=\"end\">{:.3g}</text>\n", kLeft - 6,
                     y + 4, v);
  }
  const double slot = values.empty() ? pw : pw / static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double h = values[i] / yr.hi * ph;
    const double x = kLeft + slot * static_cast<double>(i) + slot * 0.15;
    s += fmt::format(
        "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n", x,
        kTop + ph - h, slot * 0.7, h, palette(0));
    s += fmt::format("<text x=\"{:.2f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
                     x + slot * 0.35, kTop + ph + 16, escape(i < labels.size() ? labels[i] : ""));
    s += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\" font-size=\"10\">{:.4g}</text>\n",
                     x + slot * 0.35, kTop + ph - h - 4, values[i]);
  }
  s += "</svg>\n";
  return s;
}

std::string render_decision_regions(const std::string& title, const ModelParams& theta,
                                    const Dataset& points, std::size_t resolution) {
  if (points.dim() != 2) throw InvalidArgument("decision regions need 2-D features");
  if (resolution < 2) throw InvalidArgument("resolution must be at least 2");
  Range xr, yr;
  for (Eigen::Index i = 0; i < points.features.rows(); ++i) {
    xr.add(points.features(i, 0));
    yr.add(points.features(i, 1));
  }
  xr.settle();
  yr.settle();
  const double padx = 0.1 * (xr.hi - xr.lo), pady = 0.1 * (yr.hi - yr.lo);
  xr.lo -= padx, xr.hi += padx, yr.lo -= pady, yr.hi += pady;

  const std::size_t n = resolution;
  Matrix grid(static_cast<Eigen::Index>(n * n), 2);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const auto row = static_cast<Eigen::Index>(r * n + c);
      grid(row, 0) = xr.lo + (static_cast<double>(c) + 0.5) / static_cast<double>(n) * (xr.hi - xr.lo);
      grid(row, 1) = yr.hi - (static_cast<double>(r) + 0.5) / static_cast<double>(n) * (yr.hi - yr.lo);
    }
  }
  const Matrix logits = forward(theta, grid);

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const double cw = pw / static_cast<double>(n), ch = ph / static_cast<double>(n);
  std::string s = header(kWidth, kHeight);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      Eigen::Index k = 0;
      logits.row(static_cast<Eigen::Index>(r * n + c)).maxCoeff(&k);
      s += fmt::format(
          "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\" "
          "fill-opacity=\"0.25\"/>\n",
          kLeft + cw * static_cast<double>(c), kTop + ch * static_cast<double>(r), cw + 0.05,
          ch + 0.05, palette(static_cast<std::size_t>(k)));
    }
  }
  s += axes(title, "x1", "x2", xr, yr);
  for (Eigen::Index i = 0; i < points.features.rows(); ++i) {
    const double x = kLeft + (points.features(i, 0) - xr.lo) / (xr.hi - xr.lo) * pw;
    const double y = kTop + ph - (points.features(i, 1) - yr.lo) / (yr.hi - yr.lo) * ph;
    s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2.2\" fill=\"{}\" stroke=\"#222\" stroke-width=\"0.3\"/>\n",
                     x, y, palette(static_cast<std::size_t>(points.labels[static_cast<std::size_t>(i)])));
  }
  for (std::size_t c = 0; c < points.num_classes; ++c) {
    const double ly = kTop + 10 + 18 * static_cast<double>(c);
    s += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"4\" fill=\"{}\"/>\n", kWidth - kRight + 20, ly,
                     palette(c));
    s += fmt::format("<text x=\"{}\" y=\"{}\">class {}</text>\n", kWidth - kRight + 30, ly + 4, c);
  }
  s += "</svg>\n";
  return s;
}

}  // namespace fedcvar::svg
