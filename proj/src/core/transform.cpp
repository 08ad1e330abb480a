#include "treeradar/transform.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "treeradar/errors.hpp"

namespace treeradar {
namespace {

// FFTW planning is not thread-safe; execution on new arrays is.
class RealFftPlans {
 public:
  struct Plans {
    fftw_plan forward;
    fftw_plan inverse;
  };

  static RealFftPlans& instance() {
    static RealFftPlans plans;
    return plans;
  }

  Plans get(int n) {
    std::lock_guard lock(mutex_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    double* real = fftw_alloc_real(static_cast<std::size_t>(n));
    fftw_complex* spec = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    Plans p{fftw_plan_dft_r2c_1d(n, real, spec, FFTW_ESTIMATE), fftw_plan_dft_c2r_1d(n, spec, real, FFTW_ESTIMATE)};
    fftw_free(real);
    fftw_free(spec);
    plans_.emplace(n, p);
    return p;
  }

  ~RealFftPlans() {
    for (auto& [n, p] : plans_) {
      fftw_destroy_plan(p.forward);
      fftw_destroy_plan(p.inverse);
    }
  }

 private:
  std::mutex mutex_;
  std::map<int, Plans> plans_;
};

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};
using RealBuffer = std::unique_ptr<double, FftwDeleter>;
using ComplexBuffer = std::unique_ptr<fftw_complex, FftwDeleter>;

bool near_integer(double x, double tol = 1e-6) { return std::abs(x - std::round(x)) <= tol * std::max(1.0, std::abs(x)); }

// Index of the first band bin on the df lattice.
std::size_t base_bin(const FrequencyGrid& grid) {
  const double r = grid.f_lo() / grid.df();
  if (!near_integer(r)) throw InvalidArgument("band_to_time: f_lo is not a multiple of df");
  return static_cast<std::size_t>(std::llround(r));
}

void check_oversample(int oversample) {
  if (oversample != 1 && oversample != 2 && oversample != 4 && oversample != 8)
    throw InvalidArgument("band_to_time: oversample must be 1, 2, 4 or 8");
}

}  // namespace

TimeAxis time_axis_for(const FrequencyGrid& grid, int oversample) {
  check_oversample(oversample);
  const std::size_t top = base_bin(grid) + grid.n_points() - 1;
  const std::size_t n = 2 * top * static_cast<std::size_t>(oversample);
  return TimeAxis(1.0 / (static_cast<double>(n) * grid.df()), n, 0.0);
}

std::vector<double> band_to_time_trace(const Spectrum& spectrum, int oversample) {
  const TimeAxis axis = time_axis_for(spectrum.grid, oversample);
  const int n = static_cast<int>(axis.n_samples);
  const std::size_t first = base_bin(spectrum.grid);
  for (const cplx& v : spectrum.values)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw InvalidArgument("band_to_time: non-finite spectrum value");

  const auto plans = RealFftPlans::instance().get(n);
  const std::size_t half = static_cast<std::size_t>(n / 2 + 1);
  ComplexBuffer spec(fftw_alloc_complex(half));
  RealBuffer real(fftw_alloc_real(static_cast<std::size_t>(n)));
  for (std::size_t m = 0; m < half; ++m) spec.get()[m][0] = spec.get()[m][1] = 0.0;
  for (std::size_t k = 0; k < spectrum.values.size(); ++k) {
    spec.get()[first + k][0] = spectrum.values[k].real();
    spec.get()[first + k][1] = spectrum.values[k].imag();
  }
  // The half-complex layout implies X[N-m] = conj(X[m]); the output is real.
  fftw_execute_dft_c2r(plans.inverse, spec.get(), real.get());
  std::vector<double> out(static_cast<std::size_t>(n));
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = real.get()[i] * scale;
  return out;
}

BScan band_to_time(std::span<const Spectrum> spectra, int oversample, double dx) {
  if (spectra.empty()) throw InvalidArgument("band_to_time: no spectra");
  const FrequencyGrid& grid = spectra.front().grid;
  for (const Spectrum& s : spectra)
    if (!(s.grid == grid)) throw InvalidArgument("band_to_time: spectra use different frequency grids");
  BScan out(time_axis_for(grid, oversample), spectra.size(), dx, "raw");
  for (std::size_t n = 0; n < spectra.size(); ++n) out.set_trace(n, band_to_time_trace(spectra[n], oversample));
  return out;
}

Spectrum time_to_band_trace(std::span<const double> trace, const TimeAxis& axis, const FrequencyGrid& grid) {
  if (trace.size() != axis.n_samples) throw InvalidArgument("time_to_band: trace length disagrees with axis");
  const double record = static_cast<double>(axis.n_samples) * axis.dt;
  const double step = grid.df() * record;
  if (!near_integer(step) || std::llround(step) < 1)
    throw InvalidArgument("time_to_band: df is not an integer multiple of the record's bin spacing");
  const double first = grid.f_lo() * record;
  if (!near_integer(first)) throw InvalidArgument("time_to_band: f_lo does not fall on a DFT bin");
  const std::size_t stride = static_cast<std::size_t>(std::llround(step));
  const std::size_t base = static_cast<std::size_t>(std::llround(first));
  const int n = static_cast<int>(axis.n_samples);
  if (base + stride * (grid.n_points() - 1) > static_cast<std::size_t>(n / 2))
    throw InvalidArgument("time_to_band: band exceeds the Nyquist frequency of the record");

  const auto plans = RealFftPlans::instance().get(n);
  RealBuffer real(fftw_alloc_real(static_cast<std::size_t>(n)));
  ComplexBuffer spec(fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1)));
  std::copy(trace.begin(), trace.end(), real.get());
  fftw_execute_dft_r2c(plans.forward, real.get(), spec.get());

  Spectrum out(grid);
  for (std::size_t k = 0; k < grid.n_points(); ++k) {
    const std::size_t m = base + stride * k;
    cplx v(spec.get()[m][0], spec.get()[m][1]);
    if (axis.t0 != 0.0) v *= std::polar(1.0, -2.0 * std::numbers::pi * grid.freq(k) * axis.t0);
    out.values[k] = v;
  }
  return out;
}

std::vector<Spectrum> time_to_band(const BScan& bscan, const FrequencyGrid& grid) {
  std::vector<Spectrum> out;
  out.reserve(bscan.n_traces());
  for (std::size_t n = 0; n < bscan.n_traces(); ++n) out.push_back(time_to_band_trace(bscan.trace(n), bscan.axis, grid));
  return out;
}

double band_energy(const Spectrum& spectrum, std::size_t n_samples) {
  const std::size_t first = base_bin(spectrum.grid);
  double e = 0.0;
  for (std::size_t k = 0; k < spectrum.values.size(); ++k) {
    const std::size_t m = first + k;
    // DC and Nyquist bins have no mirror image.
    const bool self_mirrored = m == 0 || 2 * m == n_samples;
    e += (self_mirrored ? 1.0 : 2.0) * std::norm(spectrum.values[k]);
  }
  return e / static_cast<double>(n_samples);
}

}  // namespace treeradar
