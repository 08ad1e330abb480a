#pragma once

#include <span>
#include <vector>

#include "treeradar/core.hpp"

namespace treeradar {

/// Delays a trace by delta_t (positive moves content later) using linear
/// interpolation. Samples pulled from outside the record are zero.
/// Requires |delta_t| < axis.n_samples * axis.dt.
std::vector<double> shift_trace(std::span<const double> trace, double delta_t, const TimeAxis& axis);

/// Corner-aligned bilinear resize: output corners sample input corners exactly.
Grid2D resize_bilinear(const Grid2D& image, std::size_t out_h, std::size_t out_w);

}  // namespace treeradar
