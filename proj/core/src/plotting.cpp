#include "bnn/plotting.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <fmt/format.h>

#include "bnn/errors.hpp"

namespace bnn {

namespace {

constexpr double kMargin = 40.0;

struct Axis {
  double lo, hi, pixel_lo, pixel_hi;

  double map(double v) const {
    if (hi == lo) return 0.5 * (pixel_lo + pixel_hi);
    return pixel_lo + (v - lo) / (hi - lo) * (pixel_hi - pixel_lo);
  }
};

std::string header(const PlotOptions& o) {
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n",
      o.width, o.height);
  s += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n", o.width, o.height);
  if (!o.title.empty()) {
    s += fmt::format("<text x=\"{:.2f}\" y=\"20\" font-family=\"sans-serif\" font-size=\"13\" "
                     "text-anchor=\"middle\">{}</text>\n",
                     o.width / 2.0, o.title);
  }
  return s;
}

}  // namespace

std::string render_band_svg(const IntervalBand& band, const Vector& grid_x, const Batch& train,
                            const PlotOptions& options) {
  const Eigen::Index n = grid_x.size();
  if (n < 2 || band.low.size() != n || band.high.size() != n || band.mean.size() != n) {
    throw DimensionError("band and grid must have the same length (>= 2)");
  }
  double y_lo = std::min(band.low.minCoeff(), band.mean.minCoeff());
  double y_hi = std::max(band.high.maxCoeff(), band.mean.maxCoeff());
  if (train.size() > 0) {
    y_lo = std::min(y_lo, train.y.col(0).minCoeff());
    y_hi = std::max(y_hi, train.y.col(0).maxCoeff());
  }
  const Axis ax{grid_x.minCoeff(), grid_x.maxCoeff(), kMargin, options.width - kMargin};
  const Axis ay{y_lo, y_hi, options.height - kMargin, kMargin};

  std::string s = header(options);
  s += fmt::format("<rect x=\"{0:.2f}\" y=\"{0:.2f}\" width=\"{1:.2f}\" height=\"{2:.2f}\" "
                   "fill=\"none\" stroke=\"#999999\"/>\n",
                   kMargin, options.width - 2 * kMargin, options.height - 2 * kMargin);

  // Band polygon: upper edge left to right, lower edge right to left.
  s += "<polygon fill=\"#6baed6\" fill-opacity=\"0.4\" stroke=\"none\" points=\"";
  for (Eigen::Index i = 0; i < n; ++i) s += fmt::format("{:.2f},{:.2f} ", ax.map(grid_x[i]), ay.map(band.high[i]));
  for (Eigen::Index i = n; i-- > 0;) {
    s += fmt::format("{:.2f},{:.2f}{}", ax.map(grid_x[i]), ay.map(band.low[i]), i == 0 ? "" : " ");
  }
  s += "\"/>\n";

  s += "<polyline fill=\"none\" stroke=\"#08519c\" stroke-width=\"1.5\" points=\"";
  for (Eigen::Index i = 0; i < n; ++i) {
    s += fmt::format("{:.2f},{:.2f}{}", ax.map(grid_x[i]), ay.map(band.mean[i]), i + 1 == n ? "" : " ");
  }
  s += "\"/>\n";

  for (Eigen::Index i = 0; i < train.size(); ++i) {
    s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2.5\" fill=\"#d62728\"/>\n",
                     ax.map(train.x(i, 0)), ay.map(train.y(i, 0)));
  }
  s += "</svg>\n";
  return s;
}

std::string render_heatmap_svg(const Vector& probabilities, std::size_t points_per_axis, double lo,
                               double hi, const Batch& train, const PlotOptions& options) {
  const auto n = static_cast<Eigen::Index>(points_per_axis);
  if (points_per_axis < 2 || probabilities.size() != n * n) {
    throw DimensionError("raster must hold points_per_axis^2 probabilities");
  }
  const Axis ax{lo, hi, kMargin, options.width - kMargin};
  const Axis ay{lo, hi, options.height - kMargin, kMargin};
  const double cell_w = (options.width - 2 * kMargin) / static_cast<double>(n);
  const double cell_h = (options.height - 2 * kMargin) / static_cast<double>(n);

  std::string s = header(options);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double p = std::clamp(probabilities[i * n + j], 0.0, 1.0);
      // Blue (p = 0) to red (p = 1) through white.
      const int r = static_cast<int>(std::lround(255.0 * std::min(1.0, 2.0 * p)));
      const int b = static_cast<int>(std::lround(255.0 * std::min(1.0, 2.0 * (1.0 - p))));
      const int g = std::min(r, b);
      s += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" "
                       "fill=\"#{:02x}{:02x}{:02x}\"/>\n",
                       kMargin + static_cast<double>(j) * cell_w,
                       options.height - kMargin - static_cast<double>(i + 1) * cell_h, cell_w, cell_h, r, g, b);
    }
  }
  for (Eigen::Index i = 0; i < train.size(); ++i) {
    s += fmt::format("<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"2.5\" fill=\"{}\" stroke=\"black\" "
                     "stroke-width=\"0.5\"/>\n",
                     ax.map(train.x(i, 0)), ay.map(train.x(i, 1)), train.y(i, 0) > 0.5 ? "#ff7f0e" : "#1f77b4");
  }
  s += "</svg>\n";
  return s;
}

void write_text_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << contents;
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace bnn
