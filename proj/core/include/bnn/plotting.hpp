#pragma once

#include <string>

#include "bnn/metrics.hpp"
#include "bnn/nn.hpp"

namespace bnn {

struct PlotOptions {
  int width = 480;
  int height = 360;
  std::string title;
};

// Mean curve, shaded interval band and training scatter for 1D regression.
// Output bytes depend only on the inputs.
std::string render_band_svg(const IntervalBand& band, const Vector& grid_x, const Batch& train,
                            const PlotOptions& options = {});

// Predictive-mean probability raster over a square grid (row-major, y outer)
// with the training points overlaid.
std::string render_heatmap_svg(const Vector& probabilities, std::size_t points_per_axis,
                               double lo, double hi, const Batch& train,
                               const PlotOptions& options = {});

void write_text_file(const std::string& path, const std::string& contents);

}  // namespace bnn
