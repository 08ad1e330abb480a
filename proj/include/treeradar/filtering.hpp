#pragma once

// Free-space removal, Kaiser FIR weighting and the three-stage processing
// pipeline with per-stage SCNR reporting.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "treeradar/core.hpp"
#include "treeradar/gating.hpp"
#include "treeradar/synth.hpp"

namespace treeradar::filtering {

enum class KaiserPlacement {
  /// Left half of the window over [f_lo, f_peak], right half over [f_peak, f_hi].
  asymmetric,
  /// One symmetric window of half-width `half_width` around f_peak; zero outside.
  symmetric,
};

struct FirSpec {
  double f_peak = 1e9;
  double beta = 6.0;
  KaiserPlacement placement = KaiserPlacement::asymmetric;
  double half_width = 0.5e9;

  void validate(const FrequencyGrid& grid) const;
};

BScan free_space_removal(const BScan& raw, std::span<const double> reference);

std::vector<double> kaiser_weights(const FrequencyGrid& grid, const FirSpec& spec);

/// Band-limits every trace to the grid, multiplies by the weights, and
/// returns to time on the same axis. The record must come from band_to_time
/// on this grid (any oversample).
BScan apply_fir(const BScan& bscan, std::span<const double> weights, const FrequencyGrid& grid);

struct ScnrMasks {
  Mask signal;
  Mask cn;
};

/// Masks from simulator ground truth. Signal is +-w around the defect echo,
/// or around the far-end echo of a healthy trunk. Clutter-and-noise is every
/// other sample up to `extent` past the latest far-end echo.
ScnrMasks truth_masks(const synth::GroundTruth& truth, const TimeAxis& axis, double w, double extent = 2e-9);

struct PipelineConfig {
  bool free_space = true;
  bool gating = true;
  bool fir = true;
  /// Stage names in execution order; only "fsr", "gated", "fir" in that order are accepted.
  std::vector<std::string> order{"fsr", "gated", "fir"};
  gating::GatingConfig gate;
  FirSpec fir_spec;
  std::optional<ScnrMasks> masks;
  bool keep_stages = false;

  void validate() const;
};

struct PipelineReport {
  std::optional<double> scnr_raw;
  std::optional<double> scnr_freespace;
  std::optional<double> scnr_gated;
  std::optional<double> scnr_fir;
  std::optional<gating::GateCurve> gate;
  bool gate_fallback = false;
  std::string fallback_reason;
  /// Stage outputs in order, tagged raw/fsr/gated/fir; filled when keep_stages is set.
  std::vector<BScan> stages;
};

struct PipelineOutput {
  BScan processed;
  PipelineReport report;
};

PipelineOutput process(const BScan& raw, std::span<const double> reference, const FrequencyGrid& grid,
                       const PipelineConfig& config = {});

nlohmann::json to_json(const PipelineReport& report);

// Config documents reject unknown keys. Masks are not part of the document.
nlohmann::json to_json(const PipelineConfig& config);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

}  // namespace treeradar::filtering
