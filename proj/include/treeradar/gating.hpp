#pragma once

// C3-based zero-gating: ROI extraction (Sobel + adaptive threshold), column
// segment clustering, conic fitting of the air-bark echo, and gating.

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "treeradar/core.hpp"

namespace treeradar::gating {

/// A maximal run of above-threshold pixels in one column (rows inclusive).
struct Segment {
  std::size_t col = 0;
  std::size_t row_start = 0;
  std::size_t row_end = 0;

  double mid_row() const { return 0.5 * static_cast<double>(row_start + row_end); }
  std::size_t length() const { return row_end - row_start + 1; }
  bool operator==(const Segment&) const = default;
  auto operator<=>(const Segment&) const = default;
};

struct Cluster {
  std::vector<Segment> segments;

  std::size_t col_span() const;
  double mean_mid_row() const;
};

/// Which sign of (n - d)^2 / a^2 the curve (n-d)^2/a^2 + t^2/b^2 = 1 uses.
/// `elliptic` is the form with a^2 > 0, where t shrinks away from the apex.
/// `hyperbolic` takes a^2 < 0: t^2 = b^2 (1 + (n-d)^2/|a|^2), the shape of
/// a point reflector seen from a straight trajectory.
enum class Branch { elliptic, hyperbolic };

struct HyperbolaParams {
  double a = 1.0;
  double b = 1.0;
  double d = 0.0;
  Branch branch = Branch::hyperbolic;
  /// Mean squared residual on t^2 / t at the solution.
  double residual = 0.0;

  /// Row index of the curve at column n; empty where the elliptic form is undefined.
  std::optional<double> t_at(double n) const;
};

struct GateCurve {
  std::vector<double> t_gate;  ///< sample index per trace
  HyperbolaParams params;
  double w = 0.0;  ///< seconds
};

Grid2D sobel_magnitude(const Grid2D& image);

/// Mean |image| over pixels whose Sobel magnitude exceeds the image mean.
double adaptive_threshold(const Grid2D& image);

/// Pixel set iff |image| > threshold.
Mask binarize(const Grid2D& image, double threshold);

std::vector<Segment> extract_segments(const Mask& binary, std::size_t s_min);

/// Connected components where two segments connect iff their columns differ
/// by one and their row intervals overlap. Sweeps columns left to right.
std::vector<Cluster> c3_cluster(std::vector<Segment> segments);

struct ShapePrior {
  double min_r2 = 0.5;
};

/// True when a quadratic least-squares fit of mid_row against column curves
/// toward later time away from its vertex and explains at least min_r2.
bool passes_shape_prior(const Cluster& cluster, const ShapePrior& prior = {});

/// Widest cluster wins; then the shallowest; then the best quadratic fit.
/// Clusters failing the shape prior only win when none pass.
Cluster select_target_cluster(const std::vector<Cluster>& clusters, std::size_t n_traces, const ShapePrior& prior = {});

/// Fits (n-d)^2/a^2 + t^2/b^2 = 1 to (column, row) points. The apex d is
/// scanned over [d_lo, d_hi] in 0.1-column steps and then refined by golden
/// section; at each d the pair (b^2, b^2/a^2) is a linear least-squares solve
/// on t^2 with per-point weight 1/t.
HyperbolaParams fit_hyperbola(std::span<const std::pair<double, double>> points, std::pair<double, double> apex_window,
                              Branch branch = Branch::hyperbolic);

/// t_gate(n) = t_model(n) + w / dt. Columns where the model is undefined take
/// the nearest defined value.
GateCurve gate_curve(const HyperbolaParams& params, double w, std::size_t n_traces, const TimeAxis& axis);

/// Zeroes every sample whose index is below the trace's gate.
BScan apply_zero_gate(const BScan& bscan, const GateCurve& gate);

/// Shifts every gate time by extra_w seconds.
GateCurve offset_gate(const GateCurve& gate, double extra_w, const TimeAxis& axis);

struct GatingConfig {
  std::size_t s_min = 5;
  /// Apex search window in columns; default [n/3, 2n/3].
  std::optional<std::pair<double, double>> apex_window;
  /// Pulse-width compensation; default 1.5 / bandwidth.
  std::optional<double> w;
  /// ROI search is limited to the first search_window seconds of the record.
  double search_window = 10e-9;
  ShapePrior shape;

  std::pair<double, double> apex_window_for(std::size_t n_traces) const;
  double w_for(const FrequencyGrid& grid) const;
};

struct GatingResult {
  GateCurve gate;
  Cluster target;
  double threshold = 0.0;
  std::size_t n_clusters = 0;
};

/// Runs ROI extraction, clustering, fitting and gate construction on a
/// free-space-removed B-scan. Throws NoSurfaceClutter when nothing survives.
GatingResult find_gate(const BScan& bscan, const FrequencyGrid& grid, const GatingConfig& config = {});

nlohmann::json to_json(const GateCurve& gate);
GateCurve gate_from_json(const nlohmann::json& j);

/// Unknown keys are rejected.
nlohmann::json to_json(const GatingConfig& config);
GatingConfig gating_config_from_json(const nlohmann::json& j);

}  // namespace treeradar::gating
