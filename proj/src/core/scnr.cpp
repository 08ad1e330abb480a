#include "treeradar/scnr.hpp"

#include <cmath>

#include "treeradar/errors.hpp"

namespace treeradar {
namespace {

double mean_power(const Grid2D& g, const Mask& m) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < m.bits.size(); ++i) {
    if (!m.bits[i]) continue;
    sum += g.values[i] * g.values[i];
    ++n;
  }
  return sum / static_cast<double>(n);
}

}  // namespace

double scnr(const BScan& bscan, const Mask& signal_mask, const Mask& cn_mask) {
  for (const Mask* m : {&signal_mask, &cn_mask}) {
    if (m->rows != bscan.n_samples() || m->cols != bscan.n_traces()) throw InvalidArgument("scnr: mask shape differs from B-scan");
    if (m->count() == 0) throw InvalidArgument("scnr: empty mask");
  }
  if (!signal_mask.disjoint(cn_mask)) throw InvalidArgument("scnr: masks overlap");
  const double noise = mean_power(bscan.data, cn_mask);
  if (!(noise > 0.0)) throw DegenerateInput("scnr: degenerate noise region (zero power)");
  return 10.0 * std::log10(mean_power(bscan.data, signal_mask) / noise);
}

}  // namespace treeradar
