#pragma once

// Fundamental radar data types shared by every stage of the pipeline.

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace treeradar {

using cplx = std::complex<double>;

inline constexpr double kSpeedOfLight = 299792458.0;

/// Equally spaced stepped-frequency sweep with inclusive endpoints.
class FrequencyGrid {
 public:
  FrequencyGrid(double f_lo, double f_hi, std::size_t n_points);

  /// 0.5 to 4 GHz with 701 points.
  static FrequencyGrid standoff_default();

  double f_lo() const { return f_lo_; }
  double f_hi() const { return f_hi_; }
  std::size_t n_points() const { return n_points_; }
  double df() const { return (f_hi_ - f_lo_) / static_cast<double>(n_points_ - 1); }
  double bandwidth() const { return f_hi_ - f_lo_; }
  double freq(std::size_t k) const;

  bool operator==(const FrequencyGrid&) const = default;

 private:
  double f_lo_;
  double f_hi_;
  std::size_t n_points_;
};

/// Complex frequency response of one trace.
struct Spectrum {
  FrequencyGrid grid;
  std::vector<cplx> values;

  explicit Spectrum(FrequencyGrid g) : grid(g), values(g.n_points()) {}
  Spectrum(FrequencyGrid g, std::vector<cplx> v);
};

struct TimeAxis {
  double dt = 0.0;
  std::size_t n_samples = 0;
  double t0 = 0.0;

  TimeAxis() = default;
  TimeAxis(double dt, std::size_t n_samples, double t0 = 0.0);

  double time(double sample) const { return t0 + sample * dt; }
  double duration() const { return dt * static_cast<double>(n_samples); }
};

/// Dense row-major real grid. Rows are time samples and columns traces
/// when it backs a B-scan.
struct Grid2D {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Grid2D() = default;
  Grid2D(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  Grid2D transposed() const;
  bool operator==(const Grid2D&) const = default;
};

/// Time samples x traces real amplitude image with axis metadata.
struct BScan {
  TimeAxis axis;
  double dx = 0.02;
  Grid2D data;
  std::string stage = "raw";
  nlohmann::json extra = nlohmann::json::object();

  BScan() = default;
  BScan(TimeAxis axis, std::size_t n_traces, double dx, std::string stage = "raw");

  std::size_t n_samples() const { return data.rows; }
  std::size_t n_traces() const { return data.cols; }

  std::vector<double> trace(std::size_t n) const;
  void set_trace(std::size_t n, std::span<const double> values);

  double energy() const;
  /// Throws InvalidArgument when dimensions disagree or an amplitude is not finite.
  void validate() const;
};

/// Pixel membership over a (n_samples, n_traces) shape.
struct Mask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<unsigned char> bits;

  Mask() = default;
  Mask(std::size_t r, std::size_t c) : rows(r), cols(c), bits(r * c, 0) {}

  void set(std::size_t r, std::size_t c, bool on = true) { bits.at(r * cols + c) = on ? 1 : 0; }
  bool test(std::size_t r, std::size_t c) const { return bits[r * cols + c] != 0; }
  std::size_t count() const;
  bool disjoint(const Mask& other) const;
};

}  // namespace treeradar
