#pragma once

#include "treeradar/core.hpp"

namespace treeradar {

/// Signal-to-clutter-and-noise ratio in dB: 10 log10 of the mean-square
/// amplitude over signal_mask divided by that over cn_mask. Masks must be
/// non-empty, disjoint and match the B-scan shape. A zero-power noise region
/// raises DegenerateInput.
double scnr(const BScan& bscan, const Mask& signal_mask, const Mask& cn_mask);

}  // namespace treeradar
