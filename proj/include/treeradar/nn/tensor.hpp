#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace treeradar::nn {

/// Dense row-major array of doubles. Activations use NCHW.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }

  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }

  void fill(double v);
  bool all_finite() const;
  bool operator==(const Tensor&) const = default;
};

std::string shape_string(const std::vector<std::size_t>& shape);
std::size_t shape_size(const std::vector<std::size_t>& shape);

/// Channel-wise concatenation of NCHW tensors sharing N, H, W.
Tensor concat_channels(const std::vector<Tensor>& parts);
/// Inverse of concat_channels for the given channel counts.
std::vector<Tensor> split_channels(const Tensor& x, const std::vector<std::size_t>& channels);

}  // namespace treeradar::nn
