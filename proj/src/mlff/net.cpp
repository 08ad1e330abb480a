#include <algorithm>
#include <cmath>

#include "treeradar/errors.hpp"
#include "treeradar/json_util.hpp"
#include "treeradar/mlff.hpp"

namespace treeradar::mlff {
namespace {

const Tensor& checked(const Tensor& t, const std::string& path) {
  if (!t.all_finite()) throw NonFiniteError("non-finite activation at " + path);
  return t;
}

// Concatenate / split [N, C, L, 1] maps along the third axis.
Tensor join_rows(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.dim(0), c = a.dim(1), la = a.dim(2), lb = b.dim(2);
  Tensor out({n, c, la + lb, 1});
  for (std::size_t i = 0; i < n * c; ++i) {
    std::copy_n(a.data.begin() + static_cast<std::ptrdiff_t>(i * la), la, out.data.begin() + static_cast<std::ptrdiff_t>(i * (la + lb)));
    std::copy_n(b.data.begin() + static_cast<std::ptrdiff_t>(i * lb), lb,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * (la + lb) + la));
  }
  return out;
}

std::pair<Tensor, Tensor> split_rows(const Tensor& x, std::size_t la) {
  const std::size_t n = x.dim(0), c = x.dim(1), l = x.dim(2), lb = l - la;
  Tensor a({n, c, la, 1}), b({n, c, lb, 1});
  for (std::size_t i = 0; i < n * c; ++i) {
    std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(i * l), la, a.data.begin() + static_cast<std::ptrdiff_t>(i * la));
    std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(i * l + la), lb, b.data.begin() + static_cast<std::ptrdiff_t>(i * lb));
  }
  return {a, b};
}

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t s, std::size_t p) { return (in + 2 * p - k) / s + 1; }

}  // namespace

// ---- NetConfig ------------------------------------------------------------

std::size_t NetConfig::scaled(std::size_t c) const {
  const auto s = static_cast<std::size_t>(std::ceil(static_cast<double>(c) * width_scale - 1e-9));
  return std::max(cam_reduction, s);
}

std::size_t NetConfig::fused_channels() const { return (use_fusion ? 4 : 1) * scaled(fuse_channels); }

void NetConfig::validate() const {
  if (in_channels == 0) throw InvalidArgument("NetConfig: in_channels must be > 0");
  if (resblock_channels.size() != 8) throw InvalidArgument("NetConfig: exactly 8 residual block widths are required");
  if (classifier_channels.empty()) throw InvalidArgument("NetConfig: classifier_channels must be non-empty");
  if (cam_reduction == 0) throw InvalidArgument("NetConfig: cam_reduction must be > 0");
  if (!(width_scale > 0.0 && width_scale <= 1.0)) throw InvalidArgument("NetConfig: width_scale must lie in (0, 1]");
  if (fuse_channels == 0) throw InvalidArgument("NetConfig: fuse_channels must be > 0");
  if (fused_channels() % cam_reduction != 0)
    throw InvalidArgument("NetConfig: cam_reduction must divide the fused channel count " + std::to_string(fused_channels()));
  if (input_h < 8 || input_w < 8) throw InvalidArgument("NetConfig: input must be at least 8x8");
}

nlohmann::json to_json(const NetConfig& c) {
  return {{"in_channels", c.in_channels},
          {"input_hw", {c.input_h, c.input_w}},
          {"resblock_channels", c.resblock_channels},
          {"fuse_channels", c.fuse_channels},
          {"cam_reduction", c.cam_reduction},
          {"classifier_channels", c.classifier_channels},
          {"use_fusion", c.use_fusion},
          {"use_cam", c.use_cam},
          {"width_scale", c.width_scale}};
}

NetConfig net_config_from_json(const nlohmann::json& j) {
  require_known_keys(j,
                     {"in_channels", "input_hw", "resblock_channels", "fuse_channels", "cam_reduction", "classifier_channels",
                      "use_fusion", "use_cam", "width_scale"},
                     "net");
  NetConfig c;
  try {
    c.in_channels = j.value("in_channels", c.in_channels);
    if (j.contains("input_hw")) {
      const auto hw = j.at("input_hw").get<std::vector<std::size_t>>();
      if (hw.size() != 2) throw FormatError("net.input_hw: expected [h, w]");
      c.input_h = hw[0];
      c.input_w = hw[1];
    }
    c.resblock_channels = j.value("resblock_channels", c.resblock_channels);
    c.fuse_channels = j.value("fuse_channels", c.fuse_channels);
    c.cam_reduction = j.value("cam_reduction", c.cam_reduction);
    c.classifier_channels = j.value("classifier_channels", c.classifier_channels);
    c.use_fusion = j.value("use_fusion", c.use_fusion);
    c.use_cam = j.value("use_cam", c.use_cam);
    c.width_scale = j.value("width_scale", c.width_scale);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("net: ") + e.what());
  }
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
  return c;
}

// ---- ResBlock -------------------------------------------------------------

ResBlock::ResBlock(std::size_t in_ch, std::size_t out_ch, bool down)
    : conv1(in_ch, out_ch, 3, down ? 2 : 1, 1, false),
      conv2(out_ch, out_ch, 3, 1, 1, false),
      bn1(out_ch),
      bn2(out_ch),
      downsample(down) {
  if (down || in_ch != out_ch) shortcut = nn::Conv2d(in_ch, out_ch, 1, down ? 2 : 1, 0, true);
}

void ResBlock::init(std::mt19937_64& rng) {
  conv1.init(rng);
  conv2.init(rng);
  if (shortcut.out_channels() > 0) shortcut.init(rng);
}

Tensor ResBlock::forward(const Tensor& x, bool train) {
  Tensor main = relu1_.forward(bn1.forward(conv1.forward(x), train));
  main = bn2.forward(conv2.forward(main), train);
  const Tensor skip = shortcut.out_channels() > 0 ? shortcut.forward(x) : x;
  return relu_out_.forward(nn::add(main, skip));
}

Tensor ResBlock::backward(const Tensor& gy) {
  const Tensor g = relu_out_.backward(gy);
  Tensor dx = conv1.backward(bn1.backward(relu1_.backward(conv2.backward(bn2.backward(g)))));
  const Tensor dskip = shortcut.out_channels() > 0 ? shortcut.backward(g) : g;
  for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += dskip.data[i];
  return dx;
}

void ResBlock::collect(const std::string& prefix, nn::ParamList& params, nn::BufferList& buffers) {
  conv1.collect(nn::join(prefix, "conv1"), params);
  bn1.collect(nn::join(prefix, "bn1"), params);
  conv2.collect(nn::join(prefix, "conv2"), params);
  bn2.collect(nn::join(prefix, "bn2"), params);
  if (shortcut.out_channels() > 0) shortcut.collect(nn::join(prefix, "shortcut"), params);
  bn1.collect_buffers(nn::join(prefix, "bn1"), buffers);
  bn2.collect_buffers(nn::join(prefix, "bn2"), buffers);
}

// ---- DimUnify -------------------------------------------------------------

DimUnify::DimUnify(std::size_t in_ch, std::size_t out_ch, std::size_t out_h, std::size_t out_w)
    : reduce(in_ch, out_ch, 1, 1, 0, true), smooth(out_ch, out_ch, 3, 1, 1, true), up_(out_h, out_w), oh_(out_h), ow_(out_w) {}

void DimUnify::init(std::mt19937_64& rng) {
  reduce.init(rng);
  smooth.init(rng);
}

Tensor DimUnify::forward(const Tensor& x) {
  if (x.rank() != 4 || x.dim(2) > oh_ || x.dim(3) > ow_)
    throw InvalidArgument("DimUnify: only upsampling is supported, got " + nn::shape_string(x.shape));
  return smooth.forward(up_.forward(reduce.forward(x)));
}

Tensor DimUnify::backward(const Tensor& gy) { return reduce.backward(up_.backward(smooth.backward(gy))); }

void DimUnify::collect(const std::string& prefix, nn::ParamList& params) {
  reduce.collect(nn::join(prefix, "reduce"), params);
  smooth.collect(nn::join(prefix, "smooth"), params);
}

// ---- CoordAttention ---------------------------------------------------------

CoordAttention::CoordAttention(std::size_t channels, std::size_t reduction) {
  if (reduction == 0 || channels % reduction != 0)
    throw InvalidArgument("CoordAttention: reduction " + std::to_string(reduction) + " does not divide " + std::to_string(channels));
  mid_ = channels / reduction;
  shared = nn::Conv2d(channels, mid_, 1, 1, 0, false);
  bn = nn::BatchNorm2d(mid_);
  to_h = nn::Conv2d(mid_, channels, 1, 1, 0, true);
  to_w = nn::Conv2d(mid_, channels, 1, 1, 0, true);
}

void CoordAttention::init(std::mt19937_64& rng) {
  shared.init(rng);
  to_h.init(rng);
  to_w.init(rng);
}

Tensor CoordAttention::forward(const Tensor& x, bool train) {
  if (x.rank() != 4 || x.dim(1) != shared.in_channels())
    throw InvalidArgument("CoordAttention: channel mismatch " + nn::shape_string(x.shape));
  x_ = x;
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  z_h = Tensor({n, c, h, 1});
  z_w = Tensor({n, c, w, 1});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < h; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < w; ++j) s += x.at(b, ch, i, j);
        z_h.at(b, ch, i, 0) = s / static_cast<double>(w);
      }
      for (std::size_t j = 0; j < w; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < h; ++i) s += x.at(b, ch, i, j);
        z_w.at(b, ch, j, 0) = s / static_cast<double>(h);
      }
    }
  const Tensor f = relu_.forward(bn.forward(shared.forward(join_rows(z_h, z_w)), train));
  auto [fh, fw] = split_rows(f, h);
  Tensor lh = to_h.forward(fh), lw = to_w.forward(fw);
  if (forced_logit) {
    lh.fill(*forced_logit);
    lw.fill(*forced_logit);
  }
  nn::Sigmoid sig;
  k_h = sig.forward(lh);
  k_w = sig.forward(lw);
  Tensor y(x.shape);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) y.at(b, ch, i, j) = x.at(b, ch, i, j) * k_h.at(b, ch, i, 0) * k_w.at(b, ch, j, 0);
  return y;
}

Tensor CoordAttention::backward(const Tensor& gy) {
  if (gy.shape != x_.shape) throw InvalidArgument("CoordAttention::backward: gradient shape mismatch");
  const std::size_t n = x_.dim(0), c = x_.dim(1), h = x_.dim(2), w = x_.dim(3);
  Tensor dx(x_.shape), dlh({n, c, h, 1}), dlw({n, c, w, 1});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const double g = gy.at(b, ch, i, j), xv = x_.at(b, ch, i, j);
          const double kh = k_h.at(b, ch, i, 0), kw = k_w.at(b, ch, j, 0);
          dx.at(b, ch, i, j) = g * kh * kw;
          dlh.at(b, ch, i, 0) += g * xv * kw;
          dlw.at(b, ch, j, 0) += g * xv * kh;
        }
  if (forced_logit) return dx;
  for (std::size_t i = 0; i < dlh.size(); ++i) dlh.data[i] *= k_h.data[i] * (1.0 - k_h.data[i]);
  for (std::size_t i = 0; i < dlw.size(); ++i) dlw.data[i] *= k_w.data[i] * (1.0 - k_w.data[i]);
  const Tensor dz = shared.backward(bn.backward(relu_.backward(join_rows(to_h.backward(dlh), to_w.backward(dlw)))));
  const auto [dzh, dzw] = split_rows(dz, h);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
          dx.at(b, ch, i, j) += dzh.at(b, ch, i, 0) / static_cast<double>(w) + dzw.at(b, ch, j, 0) / static_cast<double>(h);
  return dx;
}

void CoordAttention::collect(const std::string& prefix, nn::ParamList& params, nn::BufferList& buffers) {
  shared.collect(nn::join(prefix, "shared"), params);
  bn.collect(nn::join(prefix, "bn"), params);
  to_h.collect(nn::join(prefix, "to_h"), params);
  to_w.collect(nn::join(prefix, "to_w"), params);
  bn.collect_buffers(nn::join(prefix, "bn"), buffers);
}

// ---- MLFFNet --------------------------------------------------------------

MLFFNet::MLFFNet(NetConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const NetConfig& c = config_;
  const std::size_t stem_ch = c.scaled(c.resblock_channels[0]);
  stem_conv_ = nn::Conv2d(c.in_channels, stem_ch, 7, 2, 3, false);
  stem_bn_ = nn::BatchNorm2d(stem_ch);

  std::size_t h = conv_out(c.input_h, 7, 2, 3) / 2, w = conv_out(c.input_w, 7, 2, 3) / 2;
  if (h == 0 || w == 0) throw InvalidArgument("NetConfig: input too small for the stem");
  std::size_t ch = stem_ch;
  for (std::size_t i = 0; i < 8; ++i) {
    const bool down = i == 2 || i == 4 || i == 6;
    const std::size_t out = c.scaled(c.resblock_channels[i]);
    blocks_.emplace_back(ch, out, down);
    ch = out;
    if (down) {
      h = conv_out(h, 3, 2, 1);
      w = conv_out(w, 3, 2, 1);
    }
    if (i % 2 == 1) level_shapes_[i / 2] = {ch, h, w};
  }
  const std::size_t fuse = c.scaled(c.fuse_channels);
  const std::size_t th = level_shapes_[0][1], tw = level_shapes_[0][2];
  for (std::size_t l = 0; l < 4; ++l) unify_.emplace_back(level_shapes_[l][0], fuse, th, tw);
  cam_ = CoordAttention(c.fused_channels(), c.cam_reduction);

  ch = c.fused_channels();
  h = th;
  w = tw;
  for (std::size_t i = 0; i < c.classifier_channels.size(); ++i) {
    const std::size_t out = c.scaled(c.classifier_channels[i]);
    head_conv_.emplace_back(ch, out, 3, 2, 1, false);
    head_bn_.emplace_back(out);
    head_relu_.emplace_back();
    ch = out;
    h = conv_out(h, 3, 2, 1);
    w = conv_out(w, 3, 2, 1);
  }
  fc_ = nn::Linear(ch * h * w, 1);

  std::mt19937_64 rng(seed);
  stem_conv_.init(rng);
  for (auto& b : blocks_) b.init(rng);
  for (auto& u : unify_) u.init(rng);
  cam_.init(rng);
  for (auto& conv : head_conv_) conv.init(rng);
  fc_.init(rng);
}

Tensor MLFFNet::forward(const Tensor& x, bool train) {
  const NetConfig& c = config_;
  if (x.rank() != 4 || x.dim(1) != c.in_channels || x.dim(2) != c.input_h || x.dim(3) != c.input_w)
    throw InvalidArgument("MLFFNet: expected input (N," + std::to_string(c.in_channels) + "," + std::to_string(c.input_h) + "," +
                          std::to_string(c.input_w) + "), got " + nn::shape_string(x.shape));
  checked(x, "input");
  shapes_ = {};
  shapes_.input = x.shape;
  Tensor t = checked(stem_conv_.forward(x), "stem.conv");
  t = checked(stem_pool_.forward(stem_relu_.forward(checked(stem_bn_.forward(t, train), "stem.bn"))), "stem.pool");
  shapes_.preproc = t.shape;

  std::vector<Tensor> levels;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    t = checked(blocks_[i].forward(t, train), "block" + std::to_string(i + 1));
    if (i % 2 == 1) {
      shapes_.levels[i / 2] = t.shape;
      levels.push_back(t);
    }
  }

  if (c.use_fusion) {
    std::vector<Tensor> unified;
    for (std::size_t l = 0; l < 4; ++l) unified.push_back(checked(unify_[l].forward(levels[l]), "unify" + std::to_string(l + 1)));
    t = nn::concat_channels(unified);
  } else {
    t = checked(unify_[3].forward(levels[3]), "unify4");
  }
  shapes_.fused = t.shape;
  if (c.use_cam) t = checked(cam_.forward(t, train), "cam");

  for (std::size_t i = 0; i < head_conv_.size(); ++i) {
    const std::string p = "head" + std::to_string(i + 1);
    t = checked(head_conv_[i].forward(t), p + ".conv");
    t = head_relu_[i].forward(checked(head_bn_[i].forward(t, train), p + ".bn"));
  }
  shapes_.classifier = t.shape;
  head_in_shape_ = t.shape;
  t = checked(fc_.forward(t), "fc");
  shapes_.logit = t.shape;
  return t;
}

void MLFFNet::backward(const Tensor& grad_logit) {
  const NetConfig& c = config_;
  Tensor g = fc_.backward(grad_logit);
  g.shape = head_in_shape_;
  for (std::size_t i = head_conv_.size(); i-- > 0;) g = head_conv_[i].backward(head_bn_[i].backward(head_relu_[i].backward(g)));
  if (c.use_cam) g = cam_.backward(g);

  std::array<Tensor, 4> level_grad;
  if (c.use_fusion) {
    const std::size_t f = c.scaled(c.fuse_channels);
    const auto parts = nn::split_channels(g, {f, f, f, f});
    for (std::size_t l = 0; l < 4; ++l) level_grad[l] = unify_[l].backward(parts[l]);
  } else {
    level_grad[3] = unify_[3].backward(g);
  }

  g = level_grad[3];
  for (std::size_t i = blocks_.size(); i-- > 0;) {
    if (i % 2 == 1 && i != 7 && !level_grad[i / 2].data.empty()) g = nn::add(g, level_grad[i / 2]);
    g = blocks_[i].backward(g);
  }
  stem_conv_.backward(stem_bn_.backward(stem_relu_.backward(stem_pool_.backward(g))));
}

std::vector<double> MLFFNet::predict_proba(const Tensor& x) {
  const Tensor logits = forward(x, false);
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-logits.data[i]));
  return p;
}

nn::ParamList MLFFNet::params() {
  nn::ParamList p;
  nn::BufferList unused;
  stem_conv_.collect("stem.conv", p);
  stem_bn_.collect("stem.bn", p);
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect("block" + std::to_string(i + 1), p, unused);
  for (std::size_t l = 0; l < unify_.size(); ++l) unify_[l].collect("unify" + std::to_string(l + 1), p);
  cam_.collect("cam", p, unused);
  for (std::size_t i = 0; i < head_conv_.size(); ++i) {
    head_conv_[i].collect("head" + std::to_string(i + 1) + ".conv", p);
    head_bn_[i].collect("head" + std::to_string(i + 1) + ".bn", p);
  }
  fc_.collect("fc", p);
  return p;
}

nn::BufferList MLFFNet::buffers() {
  nn::BufferList b;
  nn::ParamList unused;
  stem_bn_.collect_buffers("stem.bn", b);
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect("block" + std::to_string(i + 1), unused, b);
  cam_.collect("cam", unused, b);
  for (std::size_t i = 0; i < head_bn_.size(); ++i) head_bn_[i].collect_buffers("head" + std::to_string(i + 1) + ".bn", b);
  return b;
}

void MLFFNet::zero_grad() {
  for (auto& [name, p] : params()) p->zero_grad();
}

std::vector<std::pair<std::string, Tensor>> MLFFNet::state() {
  std::vector<std::pair<std::string, Tensor>> s;
  for (auto& [name, p] : params()) s.emplace_back(name, p->value);
  for (auto& [name, t] : buffers()) s.emplace_back(name, *t);
  return s;
}

void MLFFNet::load_state(const std::vector<std::pair<std::string, Tensor>>& state) {
  std::vector<std::pair<std::string, Tensor*>> slots;
  for (auto& [name, p] : params()) slots.emplace_back(name, &p->value);
  for (auto& [name, t] : buffers()) slots.emplace_back(name, t);
  if (state.size() != slots.size())
    throw InvalidArgument("load_state: expected " + std::to_string(slots.size()) + " tensors, got " + std::to_string(state.size()));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (state[i].first != slots[i].first) throw InvalidArgument("load_state: expected '" + slots[i].first + "', got '" + state[i].first + "'");
    if (state[i].second.shape != slots[i].second->shape)
      throw InvalidArgument("load_state: shape mismatch for '" + slots[i].first + "': " + nn::shape_string(state[i].second.shape) +
                            " vs " + nn::shape_string(slots[i].second->shape));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i].second->data = state[i].second.data;
}

}  // namespace treeradar::mlff
