#pragma once

// Straight-ray forward model of a stand-off scan past a circular trunk.
//
// Geometry: the antenna moves along the x axis (y = 0) over
// [-traj_length/2, traj_length/2] and always faces the trunk center, which
// sits at (0, standoff_mid + radius). Every echo delay is closed-form, so
// the ground truth attached to each simulated B-scan is exact.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "treeradar/core.hpp"

namespace treeradar::synth {

/// One internal reflection of the antenna: gain * exp(-j 2 pi f delay).
struct Reflector {
  double gain = 0.0;
  double delay = 0.0;
};

std::vector<Reflector> default_self_reflection();

struct AcquisitionSpec {
  double traj_length = 1.0;
  std::size_t n_traces = 51;
  double standoff_mid = 0.10;
  FrequencyGrid grid = FrequencyGrid::standoff_default();
  int oversample = 4;
  /// Per-component noise std relative to the strongest echo of the trace.
  double noise_sigma = 0.05;
  /// Noise std grows linearly from 1x at f_lo to (1 + ramp)x at f_hi.
  double noise_hf_ramp = 3.0;
  std::vector<Reflector> antenna_self_reflection = default_self_reflection();
  std::uint64_t seed = 0;

  void validate() const;
  double antenna_x(std::size_t trace) const;
  double dx() const { return traj_length / static_cast<double>(n_traces - 1); }
  cplx self_reflection(double f) const;
};

enum class DefectKind { cavity, decay };
enum class Label { healthy = 0, defective = 1 };

struct DefectSpec {
  double offset_x = 0.0;  ///< along the trajectory, from the trunk center
  double offset_y = 0.0;  ///< away from the trajectory, from the trunk center
  double radius = 0.02;
  DefectKind kind = DefectKind::cavity;
  double eps_inclusion = 1.0;

  static DefectSpec cavity(double ox, double oy, double radius);
  static DefectSpec decay(double ox, double oy, double radius);
};

struct TrunkScene {
  double radius = 0.15;
  double eps_wood = 9.0;
  /// Bulk loss in nepers per meter per GHz, evaluated at 1 GHz.
  double alpha = 2.0;
  std::vector<double> layer_radii;
  /// Permittivity inside each layer (same order as layer_radii).
  std::vector<double> layer_eps;
  std::optional<DefectSpec> defect;
  Label label = Label::healthy;
  /// Extra reflectivity of decayed tissue over the plain Fresnel term.
  double decay_gain = 2.0;

  /// Healthy trunk with one concentric layer at 0.8 * radius.
  static TrunkScene healthy(double radius);
  static TrunkScene with_defect(double radius, DefectSpec defect);

  void validate() const;
  /// Dataset-generation ranges: diameter in [0.10, 0.45] m, bark gap >= 0.04 m.
  void validate_for_dataset() const;
  TrunkScene without_defect() const;
};

enum class EchoOrigin { bark, layer, far_end, defect };

struct EchoEvent {
  double delay = 0.0;  ///< two-way, seconds
  double amplitude = 0.0;
  int polarity = 1;
  EchoOrigin origin = EchoOrigin::bark;
};

struct GroundTruth {
  std::vector<double> bark_delay;
  std::optional<std::vector<double>> defect_delay;
  std::vector<std::vector<double>> layer_delay;  ///< [layer][trace]
  std::vector<double> far_end_delay;
  Label label = Label::healthy;
  TrunkScene scene;
};

struct SimResult {
  BScan raw;
  std::vector<double> reference;
  GroundTruth truth;
};

/// Normal-incidence amplitude reflection coefficient.
double fresnel_gamma(double eps_from, double eps_to);

std::vector<EchoEvent> trace_events(const TrunkScene& scene, const AcquisitionSpec& spec, std::size_t trace_index);

Spectrum synth_spectrum(const std::vector<EchoEvent>& events, const AcquisitionSpec& spec, std::mt19937_64& rng);

SimResult simulate(const TrunkScene& scene, const AcquisitionSpec& spec);

struct DatasetRecord {
  std::string trunk_id;
  int rotation = 0;
  SimResult sim;
};

/// Draws n_trunks trunk scenes (round(n * defective_fraction) defective) and
/// simulates `rotations` scans of each, rotating the defect offset.
std::vector<DatasetRecord> sample_dataset(std::size_t n_trunks, double defective_fraction, std::uint64_t seed,
                                          int rotations = 1, const AcquisitionSpec& spec = {});

/// Scenes only, without running the simulator.
std::vector<std::pair<std::string, TrunkScene>> sample_scenes(std::size_t n_trunks, double defective_fraction,
                                                              std::uint64_t seed);

// JSON documents mirror the structs above. Unknown keys are rejected.
nlohmann::json to_json(const AcquisitionSpec& spec);
AcquisitionSpec acquisition_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrunkScene& scene);
TrunkScene scene_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GroundTruth& truth);
GroundTruth truth_from_json(const nlohmann::json& j);

const char* to_string(Label label);
const char* to_string(EchoOrigin origin);

}  // namespace treeradar::synth
