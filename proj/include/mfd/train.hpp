#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mfd/augment.hpp"
#include "mfd/inference.hpp"
#include "mfd/network.hpp"
#include "mfd/random.hpp"
#include "mfd/samples.hpp"

namespace mfd {

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double learning_rate = 0.001;
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;

  void validate() const {
    if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
    if (!(learning_rate >= 0)) throw ValidationError("train: learning_rate must be >= 0");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(epsilon > 0))
      throw ValidationError("train: invalid Adam hyper-parameters");
  }
};

template <class T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad_probs;   // dLoss/dprobs
  Tensor<T> grad_logits;  // fused softmax + cross-entropy: (probs - labels) / b
};

inline constexpr double kLogClamp = 1e-12;

// Mean categorical cross-entropy over the batch.
template <class T>
LossResult<T> cross_entropy_loss(const Tensor<T>& probs, const Tensor<T>& labels) {
  if (probs.rank() != 2 || probs.shape() != labels.shape())
    throw ShapeError("cross_entropy: probs " + to_string(probs.shape()) + " vs labels " +
                     to_string(labels.shape()));
  const std::size_t b = probs.dim(0), k = probs.dim(1);
  LossResult<T> r{0.0, Tensor<T>(probs.shape()), Tensor<T>(probs.shape())};
  for (std::size_t s = 0; s < b; ++s) {
    std::size_t ones = 0, truth = 0;
    double row_sum = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const T y = labels[s * k + c];
      if (y == T(1)) {
        ++ones;
        truth = c;
      } else if (y != T(0)) {
        ones = 2;
      }
      row_sum += static_cast<double>(probs[s * k + c]);
    }
    if (ones != 1) throw ValidationError("cross_entropy: label row " + std::to_string(s) + " is not one-hot");
    if (std::abs(row_sum - 1.0) > 1e-6)
      throw ValidationError("cross_entropy: probability row " + std::to_string(s) + " does not sum to 1");
    const double p = std::max(static_cast<double>(probs[s * k + truth]), kLogClamp);
    r.loss -= std::log(p);
    r.grad_probs[s * k + truth] = static_cast<T>(-1.0 / (p * static_cast<double>(b)));
    for (std::size_t c = 0; c < k; ++c)
      r.grad_logits[s * k + c] = (probs[s * k + c] - labels[s * k + c]) / static_cast<T>(b);
  }
  r.loss /= static_cast<double>(b);
  return r;
}

template <class T>
Tensor<T> one_hot(const std::vector<MaskClass>& labels, std::size_t classes = kNumClasses) {
  Tensor<T> t({labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) t[i * classes + ordinal(labels[i])] = T(1);
  return t;
}

// Adam first/second moment accumulators, one per parameter tensor.
template <class T>
struct OptimizerState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t t = 0;

  OptimizerState() = default;
  explicit OptimizerState(const std::vector<Tensor<T>*>& params) {
    for (const auto* p : params) {
      m.emplace_back(p->shape());
      v.emplace_back(p->shape());
    }
  }
};

// One bias-corrected Adam update, in place.
template <class T>
void adam_step(const std::vector<Tensor<T>*>& params, const Gradients<T>& grads,
               OptimizerState<T>& state, const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: parameter, gradient and state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->shape() != grads[i].shape() || params[i]->shape() != state.m[i].shape())
      throw ShapeError("adam_step: shape mismatch for parameter " + std::to_string(i));
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i]->data();
    const T* g = grads[i].data();
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    for (std::size_t j = 0; j < params[i]->size(); ++j) {
      m[j] = static_cast<T>(b1 * m[j] + (1 - b1) * g[j]);
      v[j] = static_cast<T>(b2 * v[j] + (1 - b2) * g[j] * g[j]);
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      p[j] -= static_cast<T>(cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
    }
  }
}

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // sample-weighted mean batch loss
  double train_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::optional<double> test_accuracy;
};

// `epoch,loss,train_acc` rows after a header line.
inline void write_history(std::ostream& os, const TrainHistory& h) {
  os << "epoch,loss,train_acc\n";
  os.precision(17);
  for (const auto& e : h.epochs) os << e.epoch << ',' << e.loss << ',' << e.train_accuracy << '\n';
}

inline TrainHistory read_history(std::istream& is) {
  TrainHistory h;
  std::string line;
  if (!std::getline(is, line) || line != "epoch,loss,train_acc")
    throw FormatError("history: missing header line");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    EpochStats e;
    char c1 = 0, c2 = 0;
    if (!(row >> e.epoch >> c1 >> e.loss >> c2 >> e.train_accuracy) || c1 != ',' || c2 != ',')
      throw FormatError("history: bad row '" + line + "'");
    h.epochs.push_back(e);
  }
  return h;
}

template <SampleSource S>
double accuracy(const Network<double>& net, const S& source) {
  const auto pred = predict_labels(net, source);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == source.label(i);
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

struct NoTestSet {
  std::size_t size() const { return 0; }
  MaskClass label(std::size_t) const { return MaskClass::CorrectMask; }
  Image image(std::size_t) const { return {}; }
};

// Minibatch training. Each epoch draws a seeded permutation, augments every
// sample with its own stream (seeded from the augment seed, epoch and sample
// index), and applies one Adam step per batch; the final short batch is kept.
// After each epoch the full training set is re-classified (rescale only) to
// report training accuracy.
template <SampleSource S, SampleSource Test = NoTestSet>
TrainHistory train(Network<double>& net, const S& train_set, const TrainConfig& cfg,
                   const Augmenter& augmenter, const Test& test_set = {},
                   const std::function<void(const EpochStats&)>& on_epoch = {}) {
  cfg.validate();
  if (augmenter.enabled) augmenter.config.validate();
  const std::size_t n = train_set.size();
  if (n == 0) throw ValidationError("train: empty training set");

  TrainHistory history;
  auto params = net.parameters();
  OptimizerState<double> state(params);
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(mix_seed(cfg.seed, 0x5348554646ULL, epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      std::vector<Image> imgs;
      std::vector<MaskClass> labels;
      for (std::size_t i = start; i < end; ++i) {
        const std::size_t idx = order[i];
        Rng sample_rng(mix_seed(augmenter.config.seed, epoch, idx));
        imgs.push_back(augmenter(train_set.image(idx), sample_rng));
        labels.push_back(train_set.label(idx));
      }
      const auto pass = network_forward(net, stack_images<double>(imgs), true);
      const auto loss = cross_entropy_loss(pass.output, one_hot<double>(labels, net.classes()));
      const auto grads = network_backward(net, pass, loss.grad_logits, GradientTarget::logits);
      adam_step(params, grads, state, cfg);
      loss_sum += loss.loss * static_cast<double>(end - start);
    }

    EpochStats stats{epoch + 1, loss_sum / static_cast<double>(n), accuracy(net, train_set)};
    history.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  if (test_set.size() > 0) history.test_accuracy = accuracy(net, test_set);
  return history;
}

}  // namespace mfd
