#pragma once

// Network inputs from processed scans, and the MLFW tensor file format.
//
// MLFW layout (little endian): "MLFW1", u32 tensor count, then per tensor
// u16 name length, UTF-8 name, u8 rank, u32 dims[rank], float32 values.

#include <filesystem>
#include <string>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "treeradar/core.hpp"
#include "treeradar/filtering.hpp"
#include "treeradar/gating.hpp"
#include "treeradar/mlff.hpp"

namespace treeradar::mlff {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

std::string encode_mlfw(const NamedTensors& tensors);
NamedTensors decode_mlfw(std::string_view bytes);
void write_mlfw(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors read_mlfw(const std::filesystem::path& path);

struct PrepareConfig {
  std::size_t n_channels = 10;
  double w_step = 0.03e-9;  ///< extra gate offset per channel, seconds
  double window = 5e-9;     ///< kept record length after the gate
  std::size_t out_h = 128;
  std::size_t out_w = 128;

  void validate() const;
};

nlohmann::json to_json(const PrepareConfig& c);
PrepareConfig prepare_config_from_json(const nlohmann::json& j);

struct PreparedInput {
  Tensor input;         ///< [n_channels, out_h, out_w], values in [-1, 1]
  bool padded = false;  ///< some trace ran out of record before the window ended
};

/// Channel n re-gates the scan at gate + n * w_step, then every channel is
/// straightened on the base gate (its gate time becomes t = 0), cropped to
/// `window`, resized to out_h x out_w (time x trace), and the whole stack is
/// divided by its largest magnitude.
PreparedInput prepare_input(const BScan& processed, const gating::GateCurve& gate, const PrepareConfig& config = {});

struct PreparedSample {
  Sample sample;
  bool padded = false;
  bool gate_fallback = false;
};

/// Full path from a raw scan to a network input. When gating falls back the
/// scan is straightened on a zero gate.
PreparedSample prepare_scan(const BScan& raw, std::span<const double> reference, const FrequencyGrid& grid, int label,
                            std::string trunk_id, const filtering::PipelineConfig& pipeline, const PrepareConfig& prepare);

}  // namespace treeradar::mlff
