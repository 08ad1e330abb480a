#pragma once

// BSCN container: "BSCN1\n", u64 LE header length, UTF-8 JSON header
// {n_samples, n_traces, dt_s, t0_s, dx_m, stage, extra}, then
// n_samples * n_traces LE float32 values in time-major row order.

#include <filesystem>
#include <string>
#include <string_view>

#include "treeradar/core.hpp"

namespace treeradar {

std::string encode_bscan(const BScan& bscan);
BScan decode_bscan(std::string_view bytes);

void write_bscan(const std::filesystem::path& path, const BScan& bscan);
BScan read_bscan(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace treeradar
