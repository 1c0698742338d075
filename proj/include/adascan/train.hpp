#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "adascan/data.hpp"
#include "adascan/model.hpp"

namespace adascan {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  long step = 0;
};

inline AdamState make_adam_state(const ModelParams& params) {
  AdamState st;
  for (const Tensor* block : param_blocks(params)) {
    st.m.emplace_back(block->shape());
    st.v.emplace_back(block->shape());
  }
  return st;
}

inline std::vector<Tensor> zero_gradients(const ModelParams& params) {
  std::vector<Tensor> grads;
  grads.reserve(kNumParamBlocks);
  for (const Tensor* block : param_blocks(params)) grads.emplace_back(block->shape());
  return grads;
}

// Scales all gradients by clip_norm/g when the global l2 norm g exceeds
// clip_norm; returns the pre-clip norm.
inline double clip_gradients(std::vector<Tensor>& grads, double clip_norm) {
  require(clip_norm > 0.0, "clip_gradients: clip_norm must be positive");
  double sq = 0.0;
  for (const Tensor& g : grads) {
    for (double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (Tensor& g : grads) {
      for (double& v : g.data()) v *= scale;
    }
  }
  return norm;
}

// Bias-corrected Adam with two learning-rate groups: lr_pool for the
// importance MLP, lr_classifier for the classifier head.
inline void adam_step(ModelParams& params, const std::vector<Tensor>& grads, AdamState& st,
                      AdamConfig cfg = {}) {
  auto blocks = param_blocks(params);
  require(grads.size() == blocks.size(), "adam_step: gradient block count mismatch");
  require(st.m.size() == blocks.size(), "adam_step: optimizer state mismatch");
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    require(grads[b].shape() == blocks[b]->shape(), "adam_step: gradient shape mismatch");
    if (!all_finite(grads[b]))
      throw NumericError(std::string("adam_step: non-finite gradient in block ") +
                         kParamBlockNames[b]);
  }

  st.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const double lr = is_pool_block(b) ? params.hyper.lr_pool : params.hyper.lr_classifier;
    Tensor& theta = *blocks[b];
    Tensor& m = st.m[b];
    Tensor& v = st.v[b];
    const Tensor& g = grads[b];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      theta[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
    }
  }
}

struct Metrics {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::optional<double> mean_selected_fraction;  // importance-based; adascan only
  std::optional<double> signal_gap;              // needs ground-truth masks
  std::vector<double> per_class_accuracy;
};

struct EvalOptions {
  Pooler pooler = Pooler::adascan;
  std::optional<double> const_gamma;
};

// Frames with importance above 0.5 count as selected.
inline constexpr double kSelectedThreshold = 0.5;

// Deterministic eval-mode pass over a dataset.
inline Metrics evaluate(const Dataset& ds, const ModelParams& params,
                        const EvalOptions& opts = {}) {
  require(!ds.samples.empty(), "evaluate: empty dataset");
  params.validate();
  const std::size_t num_classes = params.dims().num_classes;

  Metrics out;
  std::vector<double> class_correct(num_classes, 0.0);
  std::vector<double> class_total(num_classes, 0.0);
  double correct = 0.0;
  double loss_sum = 0.0;
  double selected_sum = 0.0;
  std::size_t gamma_samples = 0;
  double signal_gamma_sum = 0.0, distractor_gamma_sum = 0.0;
  std::size_t signal_count = 0, distractor_count = 0;

  for (const FeatureSequence& seq : ds.samples) {
    Tape tape;
    ForwardOptions fo;
    fo.pooler = opts.pooler;
    fo.const_gamma = opts.const_gamma;
    const LossOutput res = pooled_loss(seq, params, tape, fo);
    loss_sum += res.loss.item();

    const Tensor& probs = res.probs.value();
    std::size_t pred = 0;
    for (std::size_t c = 1; c < probs.size(); ++c) {
      if (probs[c] > probs[pred]) pred = c;
    }
    const auto label = static_cast<std::size_t>(seq.label);
    class_total[label] += 1.0;
    if (pred == label) {
      correct += 1.0;
      class_correct[label] += 1.0;
    }

    if (!res.gammas.empty()) {
      ++gamma_samples;
      std::size_t selected = 0;
      for (std::size_t t = 0; t < res.gammas.size(); ++t) {
        const double g = res.gammas[t].item();
        if (g > kSelectedThreshold) ++selected;
        if (seq.signal_mask) {
          if ((*seq.signal_mask)[t]) {
            signal_gamma_sum += g;
            ++signal_count;
          } else {
            distractor_gamma_sum += g;
            ++distractor_count;
          }
        }
      }
      selected_sum += static_cast<double>(selected) / static_cast<double>(res.gammas.size());
    }
  }

  const auto n = static_cast<double>(ds.samples.size());
  out.accuracy = correct / n;
  out.mean_loss = loss_sum / n;
  out.per_class_accuracy.resize(num_classes, 0.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    out.per_class_accuracy[c] = class_total[c] > 0.0 ? class_correct[c] / class_total[c] : 0.0;
  }
  if (gamma_samples > 0)
    out.mean_selected_fraction = selected_sum / static_cast<double>(gamma_samples);
  if (signal_count > 0 && distractor_count > 0) {
    out.signal_gap = signal_gamma_sum / static_cast<double>(signal_count) -
                     distractor_gamma_sum / static_cast<double>(distractor_count);
  }
  return out;
}

// Mean of per-sample gradients over the index range; fixed summation order
// keeps results reproducible.
inline std::vector<Tensor> batch_gradient(const Dataset& ds, std::span<const std::size_t> indices,
                                          const ModelParams& params, const ForwardOptions& opts) {
  require(!indices.empty(), "batch_gradient: empty batch");
  std::vector<Tensor> grads = zero_gradients(params);
  for (std::size_t idx : indices) {
    const FeatureSequence& seq = ds.samples[idx];
    Tape tape;
    const LossOutput res = pooled_loss(seq, params, tape, opts);
    if (!std::isfinite(res.loss.item()))
      throw NumericError("train: non-finite loss on sample " + seq.id);
    const Gradients g = tape.backward(res.loss);
    for (std::size_t b = 0; b < kNumParamBlocks; ++b) {
      const Tensor& gb = g.wrt(res.params.blocks[b]);
      for (std::size_t k = 0; k < gb.size(); ++k) grads[b][k] += gb[k];
    }
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (Tensor& g : grads) {
    for (double& v : g.data()) v *= inv;
  }
  return grads;
}

struct EpochRecord {
  int epoch = 0;
  Metrics train_metrics;
  Metrics test_metrics;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> history;
};

inline constexpr std::uint64_t kTrainStream = 2;

// Seeded epoch loop: shuffle, mean gradient over each batch, global-norm
// clip, Adam step. Fully deterministic given params.hyper.seed.
inline TrainResult train(const Dataset& train_set, const Dataset& test_set, ModelParams params,
                         Pooler pooler = Pooler::adascan,
                         std::optional<double> const_gamma = {}) {
  require(!train_set.samples.empty(), "train: empty training dataset");
  require(!test_set.samples.empty(), "train: empty test dataset");
  params.validate();

  const HyperParams hyper = params.hyper;
  AdamState st = make_adam_state(params);
  std::mt19937_64 rng(derive_seed(hyper.seed, kTrainStream));
  std::vector<std::size_t> order(train_set.samples.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    shuffle_values(order, rng);
    const std::size_t batch =
        hyper.batch_size > 0 ? static_cast<std::size_t>(hyper.batch_size) : order.size();
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(start + batch, order.size());
      ForwardOptions fo;
      fo.pooler = pooler;
      fo.train_mode = true;
      fo.rng = &rng;
      fo.const_gamma = const_gamma;
      std::vector<Tensor> grads = batch_gradient(
          train_set, std::span<const std::size_t>(order.data() + start, stop - start), params, fo);
      clip_gradients(grads, hyper.clip_norm);
      adam_step(params, grads, st);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_metrics = evaluate(train_set, params, {pooler, const_gamma});
    rec.test_metrics = evaluate(test_set, params, {pooler, const_gamma});
    result.history.push_back(std::move(rec));
  }
  result.params = std::move(params);
  return result;
}

}  // namespace adascan
