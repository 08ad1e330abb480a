#pragma once

// Building blocks with hand-written backward passes. Each layer caches what
// its backward pass needs from the most recent forward call; gradients
// accumulate into Param::grad until zeroed by the caller.

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "treeradar/nn/tensor.hpp"

namespace treeradar::nn {

struct Param {
  Tensor value;
  Tensor grad;

  Param() = default;
  explicit Param(std::vector<std::size_t> shape, double fill = 0.0) : value(shape, fill), grad(std::move(shape)) {}
  void zero_grad() { grad.fill(0.0); }
};

using ParamList = std::vector<std::pair<std::string, Param*>>;
using BufferList = std::vector<std::pair<std::string, Tensor*>>;

inline std::string join(const std::string& prefix, const char* name) { return prefix.empty() ? name : prefix + "." + name; }

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride, std::size_t pad, bool bias);

  /// He-normal weights (std sqrt(2 / fan_in)), zero bias.
  void init(std::mt19937_64& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  void collect(const std::string& prefix, ParamList& out);

  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }
  std::size_t out_size(std::size_t in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Param weight;  ///< [out, in, k, k]
  Param bias;    ///< [out], only when constructed with bias

 private:
  void im2col(const double* x, std::size_t h, std::size_t w, std::vector<double>& cols) const;
  void col2im(const std::vector<double>& cols, std::size_t h, std::size_t w, double* dx) const;

  std::size_t in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  bool has_bias_ = false;
  Tensor x_;
};

class BatchNorm2d {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels);

  /// Train mode normalizes with batch statistics over (N, H, W) and updates
  /// the running estimates; eval mode uses the running estimates.
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& grad_out);
  void collect(const std::string& prefix, ParamList& out);
  void collect_buffers(const std::string& prefix, BufferList& out);

  Param gamma, beta;
  Tensor running_mean, running_var;

 private:
  std::size_t c_ = 0;
  bool train_ = false;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

class MaxPool2x2 {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

 private:
  std::vector<std::size_t> in_shape_;
  std::vector<std::size_t> argmax_;
};

class ReLU {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

 private:
  Tensor y_;
};

class Sigmoid {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

 private:
  Tensor y_;
};

/// Bilinear resize with corner-aligned sampling; constant maps stay constant.
class Upsample {
 public:
  Upsample() = default;
  Upsample(std::size_t out_h, std::size_t out_w) : oh_(out_h), ow_(out_w) {}

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

 private:
  struct Tap {
    std::size_t i0, i1;
    double f;
  };
  static std::vector<Tap> taps(std::size_t in, std::size_t out);

  std::size_t oh_ = 0, ow_ = 0;
  std::vector<std::size_t> in_shape_;
};

/// Fully connected layer on the flattened trailing dimensions: [N, ...] -> [N, out].
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out);

  /// Normal weights with std sqrt(1 / fan_in), zero bias.
  void init(std::mt19937_64& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  void collect(const std::string& prefix, ParamList& out);

  Param weight;  ///< [out, in]
  Param bias;    ///< [out]

 private:
  std::size_t in_ = 0, out_ = 0;
  Tensor x_;
};

Tensor add(const Tensor& a, const Tensor& b);

}  // namespace treeradar::nn
