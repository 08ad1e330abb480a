#include "treeradar/core.hpp"

#include <algorithm>
#include <cmath>

#include "treeradar/errors.hpp"

namespace treeradar {

FrequencyGrid::FrequencyGrid(double f_lo, double f_hi, std::size_t n_points)
    : f_lo_(f_lo), f_hi_(f_hi), n_points_(n_points) {
  if (!(f_lo > 0.0) || !std::isfinite(f_lo)) throw InvalidArgument("FrequencyGrid: f_lo must be > 0");
  if (!(f_hi > f_lo) || !std::isfinite(f_hi)) throw InvalidArgument("FrequencyGrid: f_hi must exceed f_lo");
  if (n_points < 2) throw InvalidArgument("FrequencyGrid: need at least 2 points");
}

FrequencyGrid FrequencyGrid::standoff_default() { return FrequencyGrid(0.5e9, 4.0e9, 701); }

double FrequencyGrid::freq(std::size_t k) const {
  // Interpolate from both ends so the last point is exactly f_hi.
  const double u = static_cast<double>(k) / static_cast<double>(n_points_ - 1);
  return k + 1 == n_points_ ? f_hi_ : f_lo_ + u * (f_hi_ - f_lo_);
}

Spectrum::Spectrum(FrequencyGrid g, std::vector<cplx> v) : grid(g), values(std::move(v)) {
  if (values.size() != grid.n_points()) throw InvalidArgument("Spectrum: value count does not match grid");
}

TimeAxis::TimeAxis(double dt_, std::size_t n, double t0_) : dt(dt_), n_samples(n), t0(t0_) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("TimeAxis: dt must be > 0");
  if (n_samples < 1) throw InvalidArgument("TimeAxis: need at least one sample");
}

Grid2D Grid2D::transposed() const {
  Grid2D out(cols, rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out(c, r) = (*this)(r, c);
  return out;
}

BScan::BScan(TimeAxis a, std::size_t n_traces, double dx_, std::string stage_)
    : axis(a), dx(dx_), data(a.n_samples, n_traces), stage(std::move(stage_)) {}

std::vector<double> BScan::trace(std::size_t n) const {
  if (n >= n_traces()) throw InvalidArgument("BScan::trace: index out of range");
  std::vector<double> out(n_samples());
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = data(s, n);
  return out;
}

void BScan::set_trace(std::size_t n, std::span<const double> values) {
  if (n >= n_traces()) throw InvalidArgument("BScan::set_trace: index out of range");
  if (values.size() != n_samples()) throw InvalidArgument("BScan::set_trace: length mismatch");
  for (std::size_t s = 0; s < values.size(); ++s) data(s, n) = values[s];
}

double BScan::energy() const {
  double e = 0.0;
  for (double v : data.values) e += v * v;
  return e;
}

void BScan::validate() const {
  if (data.rows != axis.n_samples) throw InvalidArgument("BScan: sample count disagrees with time axis");
  if (data.values.size() != data.rows * data.cols) throw InvalidArgument("BScan: storage size mismatch");
  if (!std::all_of(data.values.begin(), data.values.end(), [](double v) { return std::isfinite(v); }))
    throw InvalidArgument("BScan: non-finite amplitude");
}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](unsigned char b) { return b != 0; }));
}

bool Mask::disjoint(const Mask& other) const {
  if (rows != other.rows || cols != other.cols) throw InvalidArgument("Mask: shapes differ");
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i] && other.bits[i]) return false;
  return true;
}

}  // namespace treeradar
