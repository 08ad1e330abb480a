#include "treeradar/resample.hpp"

#include <cmath>

#include "treeradar/errors.hpp"

namespace treeradar {

std::vector<double> shift_trace(std::span<const double> trace, double delta_t, const TimeAxis& axis) {
  if (trace.size() != axis.n_samples) throw InvalidArgument("shift_trace: trace length disagrees with axis");
  if (!(std::abs(delta_t) < axis.duration())) throw InvalidArgument("shift_trace: shift exceeds record length");
  const auto n = static_cast<std::ptrdiff_t>(trace.size());
  double shift = delta_t / axis.dt;
  if (std::abs(shift - std::round(shift)) < 1e-9) shift = std::round(shift);

  auto at = [&](std::ptrdiff_t i) { return i >= 0 && i < n ? trace[static_cast<std::size_t>(i)] : 0.0; };

  std::vector<double> out(trace.size(), 0.0);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) - shift;
    const double base = std::floor(pos);
    const double frac = pos - base;
    const auto j = static_cast<std::ptrdiff_t>(base);
    out[static_cast<std::size_t>(i)] = frac == 0.0 ? at(j) : (1.0 - frac) * at(j) + frac * at(j + 1);
  }
  return out;
}

namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

std::vector<Tap> taps(std::size_t in, std::size_t out) {
  std::vector<Tap> t(out);
  for (std::size_t i = 0; i < out; ++i) {
    if (out == 1) {
      t[i] = {0, 0, 0.0};
      continue;
    }
    // Integer numerator keeps same-size resizes exact.
    const std::size_t num = i * (in - 1);
    const std::size_t lo = num / (out - 1);
    const double frac = static_cast<double>(num % (out - 1)) / static_cast<double>(out - 1);
    t[i] = {lo, std::min(lo + 1, in - 1), frac};
  }
  return t;
}

}  // namespace

Grid2D resize_bilinear(const Grid2D& image, std::size_t out_h, std::size_t out_w) {
  if (image.rows < 2 || image.cols < 2) throw InvalidArgument("resize_bilinear: input must be at least 2x2");
  if (out_h < 1 || out_w < 1) throw InvalidArgument("resize_bilinear: output must be at least 1x1");
  const auto ty = taps(image.rows, out_h);
  const auto tx = taps(image.cols, out_w);
  Grid2D out(out_h, out_w);
  for (std::size_t i = 0; i < out_h; ++i) {
    const Tap& y = ty[i];
    for (std::size_t j = 0; j < out_w; ++j) {
      const Tap& x = tx[j];
      if (y.frac == 0.0 && x.frac == 0.0) {
        out(i, j) = image(y.lo, x.lo);
        continue;
      }
      const double top = (1.0 - x.frac) * image(y.lo, x.lo) + x.frac * image(y.lo, x.hi);
      const double bottom = (1.0 - x.frac) * image(y.hi, x.lo) + x.frac * image(y.hi, x.hi);
      out(i, j) = (1.0 - y.frac) * top + y.frac * bottom;
    }
  }
  return out;
}

}  // namespace treeradar
