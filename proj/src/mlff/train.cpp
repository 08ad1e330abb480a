#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "treeradar/errors.hpp"
#include "treeradar/mlff.hpp"

namespace treeradar::mlff {

// ---- loss -----------------------------------------------------------------

double bce_loss(double p, int label) {
  const double q = std::clamp(p, 1e-7, 1.0 - 1e-7);
  return label ? -std::log(q) : -std::log(1.0 - q);
}

BceResult bce_with_logits(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.size() != labels.size() || labels.empty()) throw InvalidArgument("bce_with_logits: one label per logit required");
  BceResult r;
  r.grad_logit = Tensor(logits.shape);
  r.prob.resize(labels.size());
  const double n = static_cast<double>(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw InvalidArgument("bce_with_logits: labels must be 0 or 1");
    const double p = 1.0 / (1.0 + std::exp(-logits.data[i]));
    r.prob[i] = p;
    r.loss += bce_loss(p, labels[i]) / n;
    r.grad_logit.data[i] = (p - labels[i]) / n;
  }
  return r;
}

// ---- Adam -----------------------------------------------------------------

void Adam::step(const nn::ParamList& params) {
  if (m_.empty()) {
    for (const auto& [name, p] : params) {
      m_.emplace_back(p->value.shape);
      v_.emplace_back(p->value.shape);
    }
  }
  if (m_.size() != params.size()) throw InvalidArgument("Adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    nn::Param& p = *params[k].second;
    if (p.grad.shape != p.value.shape || m_[k].shape != p.value.shape) throw InvalidArgument("Adam: shape mismatch for " + params[k].first);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data[i];
      double& m = m_[k].data[i];
      double& v = v_[k].data[i];
      m = config_.beta1 * m + (1.0 - config_.beta1) * g;
      v = config_.beta2 * v + (1.0 - config_.beta2) * g * g;
      p.value.data[i] -= config_.lr * (m / c1) / (std::sqrt(v / c2) + config_.eps);
    }
  }
}

// ---- metrics --------------------------------------------------------------

std::uint64_t ConfusionMatrix::total() const { return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1]; }

void ConfusionMatrix::add(int actual, int predicted) {
  if ((actual != 0 && actual != 1) || (predicted != 0 && predicted != 1)) throw InvalidArgument("ConfusionMatrix: class out of range");
  ++counts[static_cast<std::size_t>(actual)][static_cast<std::size_t>(predicted)];
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  const double total = static_cast<double>(cm.total());
  if (total == 0.0) throw InvalidArgument("metrics: empty confusion matrix");
  MetricsReport r;
  r.accuracy = static_cast<double>(cm.counts[0][0] + cm.counts[1][1]) / total;
  for (std::size_t i = 0; i < 2; ++i) {
    const double tp = static_cast<double>(cm.counts[i][i]);
    const double predicted = static_cast<double>(cm.counts[0][i] + cm.counts[1][i]);
    const double actual = static_cast<double>(cm.counts[i][0] + cm.counts[i][1]);
    if (predicted > 0.0) {
      r.class_precision[i] = tp / predicted;
    } else {
      r.undefined_precision.push_back(static_cast<int>(i));
    }
    r.class_recall[i] = actual > 0.0 ? tp / actual : 0.0;
    const double pr = r.class_precision[i], re = r.class_recall[i];
    r.class_f1[i] = pr + re > 0.0 ? 2.0 * pr * re / (pr + re) : 0.0;
  }
  r.precision = 0.5 * (r.class_precision[0] + r.class_precision[1]);
  r.recall = 0.5 * (r.class_recall[0] + r.class_recall[1]);
  r.f1 = 0.5 * (r.class_f1[0] + r.class_f1[1]);
  return r;
}

nlohmann::json to_json(const MetricsReport& m) {
  nlohmann::json j = {{"acc", m.accuracy}, {"prec", m.precision}, {"rec", m.recall}, {"f1", m.f1}};
  j["per_class"] = {{"healthy", {{"prec", m.class_precision[0]}, {"rec", m.class_recall[0]}, {"f1", m.class_f1[0]}}},
                    {"defective", {{"prec", m.class_precision[1]}, {"rec", m.class_recall[1]}, {"f1", m.class_f1[1]}}}};
  if (!m.undefined_precision.empty()) j["undefined_precision"] = m.undefined_precision;
  return j;
}

nlohmann::json to_json(const ConfusionMatrix& cm) {
  return {{"rows", "actual"}, {"cols", "predicted"}, {"order", {"healthy", "defective"}}, {"counts", cm.counts}};
}

// ---- folds ----------------------------------------------------------------

std::vector<Fold> kfold_split(const std::vector<std::string>& trunk_ids, const std::vector<int>& labels, std::size_t k,
                              std::uint64_t seed) {
  if (trunk_ids.size() != labels.size()) throw InvalidArgument("kfold_split: one label per sample required");
  if (k < 2) throw InvalidArgument("kfold_split: k must be >= 2");
  std::map<std::string, int> trunk_label;
  std::vector<std::string> order;  // first-appearance order keeps the split independent of map ordering quirks
  for (std::size_t i = 0; i < trunk_ids.size(); ++i) {
    auto [it, fresh] = trunk_label.emplace(trunk_ids[i], labels[i]);
    if (fresh) order.push_back(trunk_ids[i]);
    else if (it->second != labels[i]) throw InvalidArgument("kfold_split: trunk '" + trunk_ids[i] + "' carries two labels");
  }
  if (order.size() < k)
    throw InvalidArgument("kfold_split: insufficient trunks (" + std::to_string(order.size()) + ") for " + std::to_string(k) + " folds");

  std::vector<std::string> healthy, defective;
  for (const auto& id : order) (trunk_label[id] ? defective : healthy).push_back(id);
  std::mt19937_64 rng(seed);
  std::shuffle(healthy.begin(), healthy.end(), rng);
  std::shuffle(defective.begin(), defective.end(), rng);

  std::map<std::string, std::size_t> fold_of;
  std::size_t slot = 0;
  for (const auto* group : {&healthy, &defective})
    for (const auto& id : *group) fold_of[id] = slot++ % k;

  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < trunk_ids.size(); ++i) {
    const std::size_t f = fold_of[trunk_ids[i]];
    for (std::size_t j = 0; j < k; ++j) (j == f ? folds[j].val : folds[j].train).push_back(i);
  }
  return folds;
}

void check_no_leakage(const std::vector<Fold>& folds, const std::vector<std::string>& trunk_ids) {
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::set<std::string> train;
    for (std::size_t i : folds[f].train) train.insert(trunk_ids.at(i));
    for (std::size_t i : folds[f].val)
      if (train.count(trunk_ids.at(i)))
        throw InvalidArgument("leakage: trunk '" + trunk_ids[i] + "' in both train and validation of fold " + std::to_string(f));
  }
}

// ---- training -------------------------------------------------------------

Tensor stack(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw InvalidArgument("stack: empty batch");
  const auto& s0 = samples.at(idx.front()).input.shape;
  if (s0.size() != 3) throw InvalidArgument("stack: samples must be [C, H, W]");
  Tensor out({idx.size(), s0[0], s0[1], s0[2]});
  const std::size_t per = nn::shape_size(s0);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    const Tensor& in = samples.at(idx[b]).input;
    if (in.shape != s0) throw InvalidArgument("stack: inconsistent sample shapes");
    std::copy(in.data.begin(), in.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(b * per));
  }
  return out;
}

Prediction decide(double probability) { return {probability >= 0.5 ? 1 : 0, probability}; }

std::vector<Prediction> predict(MLFFNet& net, const std::vector<Sample>& samples, std::size_t batch) {
  if (batch == 0) throw InvalidArgument("predict: batch must be > 0");
  std::vector<Prediction> out;
  for (std::size_t start = 0; start < samples.size(); start += batch) {
    std::vector<std::size_t> idx(std::min(batch, samples.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    for (double p : net.predict_proba(stack(samples, idx))) out.push_back(decide(p));
  }
  return out;
}

ConfusionMatrix evaluate(MLFFNet& net, const std::vector<Sample>& samples, std::size_t batch) {
  ConfusionMatrix cm;
  const auto preds = predict(net, samples, batch);
  for (std::size_t i = 0; i < samples.size(); ++i) cm.add(samples[i].label, preds[i].label);
  return cm;
}

TrainResult train(MLFFNet& net, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  if (train_set.empty()) throw InvalidArgument("train: empty training set");
  if (config.batch == 0) throw InvalidArgument("train: batch must be > 0");
  TrainResult result;
  Adam opt(config.adam);
  std::mt19937_64 rng(config.seed);
  auto best_state = net.state();
  double best_acc = -1.0;
  if (!val_set.empty() && config.epochs > 0) {
    best_acc = metrics(evaluate(net, val_set, config.batch)).accuracy;
    result.best_val_acc = best_acc;
  }

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t s = 0; s < order.size(); s += config.batch) batches.emplace_back(s, std::min(order.size(), s + config.batch));
    if (batches.size() > 1 && batches.back().second - batches.back().first == 1) {
      batches[batches.size() - 2].second = batches.back().second;
      batches.pop_back();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t correct = 0;
    for (const auto& [s, e] : batches) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(s), order.begin() + static_cast<std::ptrdiff_t>(e));
      std::vector<int> labels;
      for (std::size_t i : idx) labels.push_back(train_set[i].label);
      net.zero_grad();
      const BceResult bce = bce_with_logits(net.forward(stack(train_set, idx), true), labels);
      if (!std::isfinite(bce.loss)) throw NonFiniteError("train: non-finite loss at epoch " + std::to_string(epoch));
      net.backward(bce.grad_logit);
      opt.step(net.params());
      rec.train_loss += bce.loss * static_cast<double>(idx.size());
      for (std::size_t b = 0; b < idx.size(); ++b) correct += decide(bce.prob[b]).label == labels[b];
    }
    rec.train_loss /= static_cast<double>(train_set.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
    if (!val_set.empty()) {
      rec.val_acc = metrics(evaluate(net, val_set, config.batch)).accuracy;
      if (*rec.val_acc > best_acc) {
        best_acc = *rec.val_acc;
        best_state = net.state();
        result.best_epoch = epoch;
        result.best_val_acc = best_acc;
      }
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  if (!val_set.empty()) {
    net.load_state(best_state);
  } else {
    result.best_epoch = config.epochs;
  }
  return result;
}

nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j = {{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"train_acc", r.train_acc}};
  j["val_acc"] = r.val_acc ? nlohmann::json(*r.val_acc) : nlohmann::json(nullptr);
  return j;
}

}  // namespace treeradar::mlff
