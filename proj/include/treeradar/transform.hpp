#pragma once

// Frequency <-> time conversion for stepped-frequency sweeps.
//
// A sweep occupies bins f_lo/df .. f_hi/df of a zero-embedded full spectrum
// [0, f_hi * oversample]. The time record is its conjugate-symmetric inverse
// DFT, so it is real by construction and the two transforms are an exact
// inverse pair on in-band content.

#include <span>
#include <vector>

#include "treeradar/core.hpp"

namespace treeradar {

inline constexpr int kDefaultOversample = 4;

/// Time axis produced by band_to_time for a grid: dt = 1/(2 f_hi oversample),
/// n_samples = 2 f_hi oversample / df.
TimeAxis time_axis_for(const FrequencyGrid& grid, int oversample);

/// Synthesizes one real A-scan per spectrum and stacks them into a B-scan.
/// Scaling: x[n] = (1/N) sum_m X[m] exp(+j 2 pi m n / N), so a unit-magnitude
/// spectrum maps back to unit magnitude through time_to_band.
BScan band_to_time(std::span<const Spectrum> spectra, int oversample = kDefaultOversample, double dx = 0.02);

/// Single-trace version of band_to_time.
std::vector<double> band_to_time_trace(const Spectrum& spectrum, int oversample = kDefaultOversample);

/// Forward DFT of each trace sampled on the grid, referenced to the axis origin.
std::vector<Spectrum> time_to_band(const BScan& bscan, const FrequencyGrid& grid);

Spectrum time_to_band_trace(std::span<const double> trace, const TimeAxis& axis, const FrequencyGrid& grid);

/// Energy of the real time signal implied by a sweep and record length N:
/// (1/N) sum over the full conjugate-symmetric spectrum of |X|^2.
double band_energy(const Spectrum& spectrum, std::size_t n_samples);

}  // namespace treeradar
