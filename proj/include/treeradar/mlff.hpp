#pragma once

// Multilevel feature fusion network with coordinate attention: residual
// feature extractor, four-level fusion, attention, and a strided
// classifier ending in one sigmoid output.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "treeradar/nn/layers.hpp"
#include "treeradar/nn/tensor.hpp"

namespace treeradar::mlff {

using nn::Tensor;

struct NetConfig {
  std::size_t in_channels = 10;
  std::size_t input_h = 128;
  std::size_t input_w = 128;
  std::vector<std::size_t> resblock_channels{64, 64, 128, 128, 256, 256, 512, 512};
  std::size_t fuse_channels = 64;
  std::size_t cam_reduction = 16;
  std::vector<std::size_t> classifier_channels{64, 128, 256, 512};
  bool use_fusion = true;
  bool use_cam = true;
  double width_scale = 1.0;

  /// Channel count after width scaling: max(cam_reduction, ceil(c * width_scale)).
  std::size_t scaled(std::size_t c) const;
  std::size_t fused_channels() const;
  void validate() const;
};

nlohmann::json to_json(const NetConfig& c);
NetConfig net_config_from_json(const nlohmann::json& j);

/// conv3x3-BN-ReLU-conv3x3-BN plus shortcut, ReLU after the sum. The
/// shortcut is the identity, or a strided 1x1 conv when downsampling.
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(std::size_t in_ch, std::size_t out_ch, bool downsample);

  void init(std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& grad_out);
  void collect(const std::string& prefix, nn::ParamList& params, nn::BufferList& buffers);

  nn::Conv2d conv1, conv2, shortcut;
  nn::BatchNorm2d bn1, bn2;
  bool downsample = false;

 private:
  nn::ReLU relu1_, relu_out_;
};

/// 1x1 conv to the target channel count, bilinear upsample to the target
/// size, 3x3 conv with padding 1.
class DimUnify {
 public:
  DimUnify() = default;
  DimUnify(std::size_t in_ch, std::size_t out_ch, std::size_t out_h, std::size_t out_w);

  void init(std::mt19937_64& rng);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);
  void collect(const std::string& prefix, nn::ParamList& params);

  nn::Conv2d reduce, smooth;

 private:
  nn::Upsample up_;
  std::size_t oh_ = 0, ow_ = 0;
};

/// Coordinate attention. Pools X along width and height, passes the joined
/// descriptors through a shared 1x1 conv + BN + ReLU, splits them, and maps
/// each half back to C channels with a 1x1 conv and sigmoid:
///   Y_c(i, j) = X_c(i, j) * k^h_c(i) * k^w_c(j).
class CoordAttention {
 public:
  CoordAttention() = default;
  CoordAttention(std::size_t channels, std::size_t reduction);

  void init(std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& grad_out);
  void collect(const std::string& prefix, nn::ParamList& params, nn::BufferList& buffers);

  /// Test hook: when set, both attention logit maps are replaced by this value.
  std::optional<double> forced_logit;

  // Intermediates of the most recent forward call, exposed for inspection.
  Tensor z_h;  ///< [N, C, H, 1] row means
  Tensor z_w;  ///< [N, C, W, 1] column means
  Tensor k_h;  ///< [N, C, H, 1]
  Tensor k_w;  ///< [N, C, W, 1]

  nn::Conv2d shared, to_h, to_w;
  nn::BatchNorm2d bn;

 private:
  nn::ReLU relu_;
  Tensor x_;
  std::size_t mid_ = 0;
};

/// Per-stage shapes of the last forward pass (batch dimension included).
struct ShapeTrace {
  std::vector<std::size_t> input, preproc, fused, classifier, logit;
  std::array<std::vector<std::size_t>, 4> levels;
};

class MLFFNet {
 public:
  explicit MLFFNet(NetConfig config = {}, std::uint64_t seed = 0);

  /// Returns logits [N, 1]. Throws NonFiniteError naming the layer whose
  /// output is not finite.
  Tensor forward(const Tensor& x, bool train);
  /// Backpropagates d(loss)/d(logit); parameter gradients accumulate.
  void backward(const Tensor& grad_logit);

  /// Sigmoid probabilities in eval mode, one per sample.
  std::vector<double> predict_proba(const Tensor& x);

  nn::ParamList params();
  nn::BufferList buffers();
  void zero_grad();

  /// Named value tensors (parameters, then buffers) in a fixed order.
  std::vector<std::pair<std::string, Tensor>> state();
  void load_state(const std::vector<std::pair<std::string, Tensor>>& state);

  const NetConfig& config() const { return config_; }
  const ShapeTrace& last_shapes() const { return shapes_; }
  CoordAttention& attention() { return cam_; }

 private:
  NetConfig config_;
  nn::Conv2d stem_conv_;
  nn::BatchNorm2d stem_bn_;
  nn::ReLU stem_relu_;
  nn::MaxPool2x2 stem_pool_;
  std::vector<ResBlock> blocks_;
  std::vector<DimUnify> unify_;
  CoordAttention cam_;
  std::vector<nn::Conv2d> head_conv_;
  std::vector<nn::BatchNorm2d> head_bn_;
  std::vector<nn::ReLU> head_relu_;
  nn::Linear fc_;
  ShapeTrace shapes_;
  std::vector<std::size_t> head_in_shape_;
  std::array<std::vector<std::size_t>, 4> level_shapes_;
};

// ---- loss and optimizer ---------------------------------------------------

struct BceResult {
  double loss = 0.0;         ///< mean over the batch
  Tensor grad_logit;         ///< d(mean loss)/d(logit) = (p - y) / N
  std::vector<double> prob;  ///< sigmoid(logit)
};

/// Binary cross entropy on logits; p is clamped to [1e-7, 1 - 1e-7] inside the log.
BceResult bce_with_logits(const Tensor& logits, const std::vector<int>& labels);
double bce_loss(double p, int label);

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}
  void step(const nn::ParamList& params);
  long steps() const { return t_; }

 private:
  AdamConfig config_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

// ---- metrics and folds ----------------------------------------------------

/// counts[actual][predicted]; index 0 = healthy, 1 = defective.
struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, 2>, 2> counts{};
  std::uint64_t total() const;
  void add(int actual, int predicted);
};

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;  ///< macro
  double recall = 0.0;     ///< macro
  double f1 = 0.0;         ///< macro
  std::array<double, 2> class_precision{};
  std::array<double, 2> class_recall{};
  std::array<double, 2> class_f1{};
  /// Classes never predicted; their precision is taken as 0.
  std::vector<int> undefined_precision;
};

MetricsReport metrics(const ConfusionMatrix& cm);
nlohmann::json to_json(const MetricsReport& m);
nlohmann::json to_json(const ConfusionMatrix& cm);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Trunk-level k-fold split. Trunks of each class are shuffled with the seed
/// and dealt round-robin (healthy first, then defective) so folds stay class
/// balanced; every sample follows its trunk.
std::vector<Fold> kfold_split(const std::vector<std::string>& trunk_ids, const std::vector<int>& labels, std::size_t k,
                              std::uint64_t seed);

/// Throws InvalidArgument if any trunk id occurs on both sides of a fold.
void check_no_leakage(const std::vector<Fold>& folds, const std::vector<std::string>& trunk_ids);

// ---- training ---------------------------------------------------------------

struct Sample {
  Tensor input;  ///< [C, H, W]
  int label = 0;
  std::string trunk_id;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch = 64;
  AdamConfig adam;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> val_acc;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  /// Epoch whose weights were kept (0 = initialization).
  std::size_t best_epoch = 0;
  std::optional<double> best_val_acc;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch BCE + Adam. With a validation set the weights with the highest
/// validation accuracy (earliest on ties) are restored at the end; without
/// one the final weights are kept. A trailing batch of one sample is merged
/// into the previous batch so batch statistics stay defined.
TrainResult train(MLFFNet& net, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Stacks samples [C,H,W] into a batch [N,C,H,W].
Tensor stack(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx);

struct Prediction {
  int label = 0;
  double probability = 0.0;
};

/// label = defective (1) iff p >= 0.5.
Prediction decide(double probability);
std::vector<Prediction> predict(MLFFNet& net, const std::vector<Sample>& samples, std::size_t batch = 64);
ConfusionMatrix evaluate(MLFFNet& net, const std::vector<Sample>& samples, std::size_t batch = 64);

nlohmann::json to_json(const EpochRecord& r);

}  // namespace treeradar::mlff
