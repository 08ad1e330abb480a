#include "treeradar/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "treeradar/errors.hpp"

namespace treeradar::nn {
namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

void require_nchw(const Tensor& x, const char* who) {
  if (x.rank() != 4) throw InvalidArgument(std::string(who) + ": expected NCHW input, got " + shape_string(x.shape));
}

}  // namespace

// ---- Conv2d ---------------------------------------------------------------

Conv2d::Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride, std::size_t pad, bool bias)
    : weight({out_ch, in_ch, kernel, kernel}), in_(in_ch), out_(out_ch), k_(kernel), stride_(stride), pad_(pad), has_bias_(bias) {
  if (in_ch == 0 || out_ch == 0 || kernel == 0 || stride == 0) throw InvalidArgument("Conv2d: zero-sized configuration");
  if (bias) this->bias = Param({out_ch});
}

void Conv2d::init(std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(in_ * k_ * k_)));
  for (double& v : weight.value.data) v = nd(rng);
  if (has_bias_) bias.value.fill(0.0);
}

void Conv2d::im2col(const double* x, std::size_t h, std::size_t w, std::vector<double>& cols) const {
  const std::size_t oh = out_size(h), ow = out_size(w), p = oh * ow;
  cols.assign(in_ * k_ * k_ * p, 0.0);
  for (std::size_t c = 0; c < in_; ++c)
    for (std::size_t ki = 0; ki < k_; ++ki)
      for (std::size_t kj = 0; kj < k_; ++kj) {
        double* row = cols.data() + ((c * k_ + ki) * k_ + kj) * p;
        for (std::size_t y = 0; y < oh; ++y) {
          const auto iy = static_cast<std::ptrdiff_t>(y * stride_ + ki) - static_cast<std::ptrdiff_t>(pad_);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          const double* src = x + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t xo = 0; xo < ow; ++xo) {
            const auto ix = static_cast<std::ptrdiff_t>(xo * stride_ + kj) - static_cast<std::ptrdiff_t>(pad_);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) row[y * ow + xo] = src[ix];
          }
        }
      }
}

void Conv2d::col2im(const std::vector<double>& cols, std::size_t h, std::size_t w, double* dx) const {
  const std::size_t oh = out_size(h), ow = out_size(w), p = oh * ow;
  for (std::size_t c = 0; c < in_; ++c)
    for (std::size_t ki = 0; ki < k_; ++ki)
      for (std::size_t kj = 0; kj < k_; ++kj) {
        const double* row = cols.data() + ((c * k_ + ki) * k_ + kj) * p;
        for (std::size_t y = 0; y < oh; ++y) {
          const auto iy = static_cast<std::ptrdiff_t>(y * stride_ + ki) - static_cast<std::ptrdiff_t>(pad_);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          double* dst = dx + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t xo = 0; xo < ow; ++xo) {
            const auto ix = static_cast<std::ptrdiff_t>(xo * stride_ + kj) - static_cast<std::ptrdiff_t>(pad_);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += row[y * ow + xo];
          }
        }
      }
}

Tensor Conv2d::forward(const Tensor& x) {
  require_nchw(x, "Conv2d");
  if (x.dim(1) != in_)
    throw InvalidArgument("Conv2d: expected " + std::to_string(in_) + " input channels, got " + shape_string(x.shape));
  if (x.dim(2) + 2 * pad_ < k_ || x.dim(3) + 2 * pad_ < k_) throw InvalidArgument("Conv2d: input smaller than kernel");
  x_ = x;
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3), oh = out_size(h), ow = out_size(w), p = oh * ow;
  const std::size_t kk = in_ * k_ * k_;
  Tensor y({n, out_, oh, ow});
  std::vector<double> cols;
  const CMapR W(weight.value.data.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(kk));
  for (std::size_t b = 0; b < n; ++b) {
    im2col(x.data.data() + b * in_ * h * w, h, w, cols);
    MapR Y(y.data.data() + b * out_ * p, static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(p));
    Y.noalias() = W * CMapR(cols.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(p));
    if (has_bias_)
      for (std::size_t o = 0; o < out_; ++o) Y.row(static_cast<Eigen::Index>(o)).array() += bias.value.data[o];
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& gy) {
  const std::size_t n = x_.dim(0), h = x_.dim(2), w = x_.dim(3), p = out_size(h) * out_size(w);
  const std::size_t kk = in_ * k_ * k_;
  if (gy.size() != n * out_ * p) throw InvalidArgument("Conv2d::backward: gradient shape mismatch");
  Tensor dx(x_.shape);
  std::vector<double> cols, dcols(kk * p);
  const CMapR W(weight.value.data.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(kk));
  MapR dW(weight.grad.data.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(kk));
  for (std::size_t b = 0; b < n; ++b) {
    const CMapR G(gy.data.data() + b * out_ * p, static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(p));
    im2col(x_.data.data() + b * in_ * h * w, h, w, cols);
    dW.noalias() += G * CMapR(cols.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(p)).transpose();
    if (has_bias_)
      for (std::size_t o = 0; o < out_; ++o) bias.grad.data[o] += G.row(static_cast<Eigen::Index>(o)).sum();
    MapR(dcols.data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(p)).noalias() = W.transpose() * G;
    col2im(dcols, h, w, dx.data.data() + b * in_ * h * w);
  }
  return dx;
}

void Conv2d::collect(const std::string& prefix, ParamList& out) {
  out.emplace_back(join(prefix, "weight"), &weight);
  if (has_bias_) out.emplace_back(join(prefix, "bias"), &bias);
}

// ---- BatchNorm2d ----------------------------------------------------------

BatchNorm2d::BatchNorm2d(std::size_t channels)
    : gamma({channels}, 1.0), beta({channels}), running_mean({channels}), running_var({channels}, 1.0), c_(channels) {}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
  require_nchw(x, "BatchNorm2d");
  if (x.dim(1) != c_) throw InvalidArgument("BatchNorm2d: channel mismatch " + shape_string(x.shape));
  const std::size_t n = x.dim(0), plane = x.dim(2) * x.dim(3);
  const double count = static_cast<double>(n * plane);
  train_ = train;
  xhat_ = Tensor(x.shape);
  inv_std_.assign(c_, 0.0);
  Tensor y(x.shape);
  for (std::size_t c = 0; c < c_; ++c) {
    double mean = 0.0, var = 0.0;
    if (train) {
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = x.data.data() + (b * c_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) mean += p[i];
      }
      mean /= count;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = x.data.data() + (b * c_ + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) var += (p[i] - mean) * (p[i] - mean);
      }
      var /= count;
      const double unbiased = count > 1.0 ? var * count / (count - 1.0) : var;
      running_mean.data[c] = (1.0 - kMomentum) * running_mean.data[c] + kMomentum * mean;
      running_var.data[c] = (1.0 - kMomentum) * running_var.data[c] + kMomentum * unbiased;
    } else {
      mean = running_mean.data[c];
      var = running_var.data[c];
    }
    const double inv = 1.0 / std::sqrt(var + kEps);
    inv_std_[c] = inv;
    const double g = gamma.value.data[c], s = beta.value.data[c];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double xh = (x.data[off + i] - mean) * inv;
        xhat_.data[off + i] = xh;
        y.data[off + i] = g * xh + s;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& gy) {
  if (gy.shape != xhat_.shape) throw InvalidArgument("BatchNorm2d::backward: gradient shape mismatch");
  const std::size_t n = gy.dim(0), plane = gy.dim(2) * gy.dim(3);
  const double count = static_cast<double>(n * plane);
  Tensor dx(gy.shape);
  for (std::size_t c = 0; c < c_; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += gy.data[off + i];
        sum_dy_xh += gy.data[off + i] * xhat_.data[off + i];
      }
    }
    gamma.grad.data[c] += sum_dy_xh;
    beta.grad.data[c] += sum_dy;
    const double scale = gamma.value.data[c] * inv_std_[c];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c_ + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double g = gy.data[off + i];
        dx.data[off + i] = train_ ? scale * (g - sum_dy / count - xhat_.data[off + i] * sum_dy_xh / count) : scale * g;
      }
    }
  }
  return dx;
}

void BatchNorm2d::collect(const std::string& prefix, ParamList& out) {
  out.emplace_back(join(prefix, "gamma"), &gamma);
  out.emplace_back(join(prefix, "beta"), &beta);
}

void BatchNorm2d::collect_buffers(const std::string& prefix, BufferList& out) {
  out.emplace_back(join(prefix, "running_mean"), &running_mean);
  out.emplace_back(join(prefix, "running_var"), &running_var);
}

// ---- MaxPool2x2 -----------------------------------------------------------

Tensor MaxPool2x2::forward(const Tensor& x) {
  require_nchw(x, "MaxPool2x2");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) throw InvalidArgument("MaxPool2x2: input smaller than 2x2");
  in_shape_ = x.shape;
  Tensor y({n, c, oh, ow});
  argmax_.assign(y.size(), 0);
  std::size_t o = 0;
  for (std::size_t b = 0; b < n * c; ++b) {
    const std::size_t base = b * h * w;
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j, ++o) {
        std::size_t best = base + 2 * i * w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t idx = base + (2 * i + di) * w + 2 * j + dj;
            if (x.data[idx] > x.data[best]) best = idx;
          }
        argmax_[o] = best;
        y.data[o] = x.data[best];
      }
  }
  return y;
}

Tensor MaxPool2x2::backward(const Tensor& gy) {
  if (gy.size() != argmax_.size()) throw InvalidArgument("MaxPool2x2::backward: gradient shape mismatch");
  Tensor dx(in_shape_);
  for (std::size_t o = 0; o < argmax_.size(); ++o) dx.data[argmax_[o]] += gy.data[o];
  return dx;
}

// ---- ReLU / Sigmoid -------------------------------------------------------

Tensor ReLU::forward(const Tensor& x) {
  y_ = x;
  for (double& v : y_.data) v = v > 0.0 ? v : 0.0;
  return y_;
}

Tensor ReLU::backward(const Tensor& gy) {
  if (gy.shape != y_.shape) throw InvalidArgument("ReLU::backward: gradient shape mismatch");
  Tensor dx = gy;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(y_.data[i] > 0.0)) dx.data[i] = 0.0;
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x) {
  y_ = x;
  for (double& v : y_.data) v = 1.0 / (1.0 + std::exp(-v));
  return y_;
}

Tensor Sigmoid::backward(const Tensor& gy) {
  if (gy.shape != y_.shape) throw InvalidArgument("Sigmoid::backward: gradient shape mismatch");
  Tensor dx = gy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] *= y_.data[i] * (1.0 - y_.data[i]);
  return dx;
}

// ---- Upsample -------------------------------------------------------------

std::vector<Upsample::Tap> Upsample::taps(std::size_t in, std::size_t out) {
  std::vector<Tap> t(out);
  for (std::size_t o = 0; o < out; ++o) {
    if (out == 1 || in == 1) {
      t[o] = {0, 0, 0.0};
      continue;
    }
    const std::size_t num = o * (in - 1), den = out - 1;
    const std::size_t i0 = num / den;
    t[o] = {i0, std::min(i0 + 1, in - 1), static_cast<double>(num % den) / static_cast<double>(den)};
  }
  return t;
}

Tensor Upsample::forward(const Tensor& x) {
  require_nchw(x, "Upsample");
  in_shape_ = x.shape;
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto th = taps(h, oh_), tw = taps(w, ow_);
  Tensor y({x.dim(0), x.dim(1), oh_, ow_});
  for (std::size_t b = 0; b < nc; ++b) {
    const double* src = x.data.data() + b * h * w;
    double* dst = y.data.data() + b * oh_ * ow_;
    for (std::size_t i = 0; i < oh_; ++i)
      for (std::size_t j = 0; j < ow_; ++j) {
        const auto& a = th[i];
        const auto& c = tw[j];
        const double top = (1.0 - c.f) * src[a.i0 * w + c.i0] + c.f * src[a.i0 * w + c.i1];
        const double bot = (1.0 - c.f) * src[a.i1 * w + c.i0] + c.f * src[a.i1 * w + c.i1];
        dst[i * ow_ + j] = (1.0 - a.f) * top + a.f * bot;
      }
  }
  return y;
}

Tensor Upsample::backward(const Tensor& gy) {
  const std::size_t nc = in_shape_[0] * in_shape_[1], h = in_shape_[2], w = in_shape_[3];
  if (gy.size() != nc * oh_ * ow_) throw InvalidArgument("Upsample::backward: gradient shape mismatch");
  const auto th = taps(h, oh_), tw = taps(w, ow_);
  Tensor dx(in_shape_);
  for (std::size_t b = 0; b < nc; ++b) {
    const double* g = gy.data.data() + b * oh_ * ow_;
    double* d = dx.data.data() + b * h * w;
    for (std::size_t i = 0; i < oh_; ++i)
      for (std::size_t j = 0; j < ow_; ++j) {
        const auto& a = th[i];
        const auto& c = tw[j];
        const double v = g[i * ow_ + j];
        d[a.i0 * w + c.i0] += (1.0 - a.f) * (1.0 - c.f) * v;
        d[a.i0 * w + c.i1] += (1.0 - a.f) * c.f * v;
        d[a.i1 * w + c.i0] += a.f * (1.0 - c.f) * v;
        d[a.i1 * w + c.i1] += a.f * c.f * v;
      }
  }
  return dx;
}

// ---- Linear ---------------------------------------------------------------

Linear::Linear(std::size_t in, std::size_t out) : weight({out, in}), bias({out}), in_(in), out_(out) {}

void Linear::init(std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, std::sqrt(1.0 / static_cast<double>(in_)));
  for (double& v : weight.value.data) v = nd(rng);
  bias.value.fill(0.0);
}

Tensor Linear::forward(const Tensor& x) {
  if (x.rank() < 1 || x.size() != x.dim(0) * in_)
    throw InvalidArgument("Linear: expected " + std::to_string(in_) + " features per sample, got " + shape_string(x.shape));
  x_ = x;
  const auto n = static_cast<Eigen::Index>(x.dim(0));
  Tensor y({x.dim(0), out_});
  const CMapR X(x.data.data(), n, static_cast<Eigen::Index>(in_));
  const CMapR W(weight.value.data.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
  MapR Y(y.data.data(), n, static_cast<Eigen::Index>(out_));
  Y.noalias() = X * W.transpose();
  for (Eigen::Index b = 0; b < n; ++b)
    for (std::size_t o = 0; o < out_; ++o) Y(b, static_cast<Eigen::Index>(o)) += bias.value.data[o];
  return y;
}

Tensor Linear::backward(const Tensor& gy) {
  const auto n = static_cast<Eigen::Index>(x_.dim(0));
  if (gy.size() != x_.dim(0) * out_) throw InvalidArgument("Linear::backward: gradient shape mismatch");
  const CMapR G(gy.data.data(), n, static_cast<Eigen::Index>(out_));
  const CMapR X(x_.data.data(), n, static_cast<Eigen::Index>(in_));
  const CMapR W(weight.value.data.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
  MapR(weight.grad.data.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_)).noalias() += G.transpose() * X;
  for (Eigen::Index b = 0; b < n; ++b)
    for (std::size_t o = 0; o < out_; ++o) bias.grad.data[o] += G(b, static_cast<Eigen::Index>(o));
  Tensor dx(x_.shape);
  MapR(dx.data.data(), n, static_cast<Eigen::Index>(in_)).noalias() = G * W;
  return dx;
}

void Linear::collect(const std::string& prefix, ParamList& out) {
  out.emplace_back(join(prefix, "weight"), &weight);
  out.emplace_back(join(prefix, "bias"), &bias);
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) throw InvalidArgument("add: shape mismatch " + shape_string(a.shape) + " vs " + shape_string(b.shape));
  Tensor y = a;
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += b.data[i];
  return y;
}

}  // namespace treeradar::nn
