#include "treeradar/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "treeradar/errors.hpp"

namespace treeradar::nn {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + ")";
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InvalidArgument("concat_channels: nothing to concatenate");
  const auto& s0 = parts.front().shape;
  if (s0.size() != 4) throw InvalidArgument("concat_channels: expected NCHW");
  std::size_t channels = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != 4 || p.dim(0) != s0[0] || p.dim(2) != s0[2] || p.dim(3) != s0[3])
      throw InvalidArgument("concat_channels: shape mismatch " + shape_string(p.shape) + " vs " + shape_string(s0));
    channels += p.dim(1);
  }
  Tensor out({s0[0], channels, s0[2], s0[3]});
  const std::size_t plane = s0[2] * s0[3];
  auto dst = out.data.begin();
  for (std::size_t n = 0; n < s0[0]; ++n)
    for (const Tensor& p : parts) {
      const auto src = p.data.begin() + static_cast<std::ptrdiff_t>(n * p.dim(1) * plane);
      dst = std::copy(src, src + static_cast<std::ptrdiff_t>(p.dim(1) * plane), dst);
    }
  return out;
}

std::vector<Tensor> split_channels(const Tensor& x, const std::vector<std::size_t>& channels) {
  if (x.rank() != 4 || std::accumulate(channels.begin(), channels.end(), std::size_t{0}) != x.dim(1))
    throw InvalidArgument("split_channels: channel counts do not add up");
  const std::size_t plane = x.dim(2) * x.dim(3);
  std::vector<Tensor> out;
  for (std::size_t c : channels) out.emplace_back(std::vector<std::size_t>{x.dim(0), c, x.dim(2), x.dim(3)});
  auto src = x.data.begin();
  for (std::size_t n = 0; n < x.dim(0); ++n)
    for (std::size_t i = 0; i < channels.size(); ++i) {
      const auto len = static_cast<std::ptrdiff_t>(channels[i] * plane);
      std::copy(src, src + len, out[i].data.begin() + static_cast<std::ptrdiff_t>(n * channels[i] * plane));
      src += len;
    }
  return out;
}

}  // namespace treeradar::nn
