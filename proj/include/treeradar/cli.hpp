#pragma once

// The `treeradar` command-line tool. Subcommands: simulate, process, plot,
// prepare, train, eval, predict, scnr.
//
// Exit codes: 0 success, 1 any other failure, 2 gating fell back because no
// surface clutter was found, 3 malformed BSCN input.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "treeradar/core.hpp"
#include "treeradar/mlff.hpp"
#include "treeradar/synth.hpp"

namespace treeradar::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitGateFallback = 2;
inline constexpr int kExitBadScan = 3;

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct SimulateConfig {
  std::size_t n_trunks = 20;
  double defective_fraction = 0.5;
  std::uint64_t seed = 0;
  int rotations = 1;
  synth::AcquisitionSpec acquisition;
};

nlohmann::json to_json(const SimulateConfig& c);
SimulateConfig simulate_config_from_json(const nlohmann::json& j);

struct TrainRunConfig {
  std::size_t folds = 5;
  mlff::TrainConfig train;
  mlff::NetConfig net;
};

nlohmann::json to_json(const TrainRunConfig& c);
TrainRunConfig train_run_config_from_json(const nlohmann::json& j);

enum class PlotStyle { gray, color };

/// Binary PGM (P5) or PPM (P6), time down and traces across, linear min-max
/// scaling; a constant image maps to mid-gray. Every `decimate`-th time
/// sample is kept.
std::string render_image(const BScan& bscan, PlotStyle style, std::size_t decimate = 1);

}  // namespace treeradar::cli
