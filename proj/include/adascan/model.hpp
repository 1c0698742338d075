#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "adascan/pooling.hpp"
#include "adascan/rng.hpp"

namespace adascan {

enum class RegKind { entropy, l1, none };

inline const char* to_string(RegKind r) {
  switch (r) {
    case RegKind::entropy: return "entropy";
    case RegKind::l1: return "l1";
    case RegKind::none: return "none";
  }
  return "?";
}

inline std::optional<RegKind> reg_kind_from_string(const std::string& s) {
  if (s == "entropy") return RegKind::entropy;
  if (s == "l1") return RegKind::l1;
  if (s == "none") return RegKind::none;
  return std::nullopt;
}

struct HyperParams {
  double lambda = 1.0;  // importance-regularizer weight, >= 0
  double lr_pool = 1e-3;
  double lr_classifier = 3e-3;
  double clip_norm = 5.0;
  int epochs = 30;
  int batch_size = 32;
  double dropout_p = 0.0;  // drop probability, [0,1)
  RegKind reg_kind = RegKind::entropy;
  std::size_t hidden1 = 64;
  std::size_t hidden2 = 32;
  std::uint64_t seed = 42;
};

struct Dims {
  std::size_t feat_dim = 0;
  std::size_t num_classes = 0;
  std::size_t h1 = 0;
  std::size_t h2 = 0;
};

// Three affine layers with tanh, tanh and a final sigmoid; output in (0,1).
struct ImportanceMlp {
  Tensor w1, b1;  // h1 x D, h1
  Tensor w2, b2;  // h2 x h1, h2
  Tensor w3, b3;  // 1 x h2, 1
};

struct Classifier {
  Tensor w;  // C x D
  Tensor b;  // C
};

struct ModelParams {
  std::string version = "1";
  ImportanceMlp imp;
  Classifier classifier;
  HyperParams hyper;

  Dims dims() const {
    return Dims{imp.w1.cols(), classifier.w.rows(), imp.w1.rows(), imp.w2.rows()};
  }

  void validate() const {
    const Dims d = dims();
    require(d.feat_dim >= 1 && d.num_classes >= 1 && d.h1 >= 1 && d.h2 >= 1,
            "ModelParams: degenerate dimensions");
    require(imp.b1.size() == d.h1 && imp.w2.cols() == d.h1, "ModelParams: h1 mismatch");
    require(imp.b2.size() == d.h2 && imp.w3.cols() == d.h2, "ModelParams: h2 mismatch");
    require(imp.w3.rows() == 1 && imp.b3.size() == 1, "ModelParams: importance head must be scalar");
    require(classifier.w.cols() == d.feat_dim, "ModelParams: classifier input width mismatch");
    require(classifier.b.size() == d.num_classes, "ModelParams: classifier bias mismatch");
    require(hyper.lambda >= 0.0, "ModelParams: lambda must be non-negative");
  }
};

// Fixed flattening order shared by the optimizer, serialization and
// gradient extraction. The first six blocks form the pooling group.
inline constexpr std::size_t kNumParamBlocks = 8;
inline constexpr std::array<const char*, kNumParamBlocks> kParamBlockNames = {
    "imp.w1", "imp.b1", "imp.w2", "imp.b2", "imp.w3", "imp.b3", "classifier.w", "classifier.b"};

inline constexpr bool is_pool_block(std::size_t i) { return i < 6; }

inline std::array<Tensor*, kNumParamBlocks> param_blocks(ModelParams& p) {
  return {&p.imp.w1, &p.imp.b1, &p.imp.w2, &p.imp.b2,
          &p.imp.w3, &p.imp.b3, &p.classifier.w, &p.classifier.b};
}

inline std::array<const Tensor*, kNumParamBlocks> param_blocks(const ModelParams& p) {
  return {&p.imp.w1, &p.imp.b1, &p.imp.w2, &p.imp.b2,
          &p.imp.w3, &p.imp.b3, &p.classifier.w, &p.classifier.b};
}

struct ImpVars {
  Var w1, b1, w2, b2, w3, b3;
};

struct ParamVars {
  ImpVars imp;
  AffineVars classifier;
  std::array<Var, kNumParamBlocks> blocks;  // same order as kParamBlockNames
};

inline ParamVars make_param_leaves(Tape& tape, const ModelParams& p) {
  ParamVars pv;
  pv.imp.w1 = tape.leaf(p.imp.w1, true);
  pv.imp.b1 = tape.leaf(p.imp.b1, true);
  pv.imp.w2 = tape.leaf(p.imp.w2, true);
  pv.imp.b2 = tape.leaf(p.imp.b2, true);
  pv.imp.w3 = tape.leaf(p.imp.w3, true);
  pv.imp.b3 = tape.leaf(p.imp.b3, true);
  pv.classifier.w = tape.leaf(p.classifier.w, true);
  pv.classifier.b = tape.leaf(p.classifier.b, true);
  pv.blocks = {pv.imp.w1, pv.imp.b1, pv.imp.w2, pv.imp.b2,
               pv.imp.w3, pv.imp.b3, pv.classifier.w, pv.classifier.b};
  return pv;
}

inline Var f_imp_forward(Var residual, const ImpVars& imp) {
  Var h1 = tanh(add(matvec(imp.w1, residual), imp.b1));
  Var h2 = tanh(add(matvec(imp.w2, h1), imp.b2));
  return sigmoid(add(matvec(imp.w3, h2), imp.b3));
}

struct ClassifyOutput {
  Var logits;
  Var probs;
};

// l2-normalize, affine, softmax. Scale of psi does not affect probs.
inline ClassifyOutput classify(Var psi, const AffineVars& classifier, double eps = 1e-12) {
  Var unit = l2_normalize(psi, eps);
  Var logits = add(matvec(classifier.w, unit), classifier.b);
  return {logits, softmax(logits)};
}

// Entropy of the softmax-normalized importance trace; low entropy means a
// peaky frame selection.
inline Var entropy_reg(const std::vector<Var>& gammas) {
  require(!gammas.empty(), "entropy_reg: empty trace");
  return scale(neg_entropy(softmax(concat(gammas))), -1.0);
}

// Sum of |gamma_t|. Kept for comparison; tends to switch off far more
// frames than the entropy regularizer at matched strength.
inline Var l1_reg(const std::vector<Var>& gammas) {
  require(!gammas.empty(), "l1_reg: empty trace");
  Var g = concat(gammas);
  Tensor signs(g.value().shape());
  for (std::size_t i = 0; i < signs.size(); ++i) {
    const double v = g.value()[i];
    signs[i] = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
  }
  Tape& tape = detail::tape_of(g);
  return dot(g, tape.leaf(std::move(signs)));
}

// Inverted dropout: zero each coordinate with probability p and scale
// survivors by 1/(1-p); identity in eval mode.
inline Tensor dropout_scale_mask(std::size_t n, double p, std::mt19937_64& rng) {
  require(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  Tensor mask({n});
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < n; ++i) mask[i] = uniform01(rng) < p ? 0.0 : keep_scale;
  return mask;
}

inline Tensor dropout_mask(const Tensor& vec, double p, std::mt19937_64& rng, bool train_flag) {
  require(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  if (!train_flag || p == 0.0) return vec;
  Tensor out = vec;
  const Tensor mask = dropout_scale_mask(vec.size(), p, rng);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return out;
}

inline Tensor dropout_mask(const Tensor& vec, double p, std::uint64_t seed, bool train_flag) {
  std::mt19937_64 rng(seed);
  return dropout_mask(vec, p, rng, train_flag);
}

struct ForwardOptions {
  Pooler pooler = Pooler::adascan;
  bool train_mode = false;
  std::mt19937_64* rng = nullptr;     // needed when train_mode and dropout_p > 0
  std::optional<double> const_gamma;  // overrides f_imp with a constant
};

struct LossOutput {
  Var loss;
  Var logits;
  Var probs;
  std::vector<Var> gammas;  // empty for poolers without importances
  ParamVars params;
};

// Full pipeline for one sample on one tape: pool, classify,
// cross-entropy plus the configured importance regularizer.
inline LossOutput pooled_loss(const FeatureSequence& seq, const ModelParams& mp, Tape& tape,
                              const ForwardOptions& opts = {}) {
  mp.validate();
  const Dims dims = mp.dims();
  require(seq.feat_dim() == dims.feat_dim, "pooled_loss: feature width mismatch");
  require(seq.label >= 0 && static_cast<std::size_t>(seq.label) < dims.num_classes,
          "pooled_loss: label out of range");

  const HyperParams& hyper = mp.hyper;
  const bool drop = opts.train_mode && hyper.dropout_p > 0.0;
  require(!drop || opts.rng != nullptr, "pooled_loss: dropout requires an rng");

  // Dropout on frame features happens before pooling; the masks are
  // constants, so plain masking keeps gradients exact.
  const FeatureSequence* input = &seq;
  FeatureSequence dropped;
  if (drop) {
    dropped = seq;
    for (std::size_t t = 0; t < dropped.length(); ++t) {
      const Tensor mask = dropout_scale_mask(dims.feat_dim, hyper.dropout_p, *opts.rng);
      for (std::size_t j = 0; j < dims.feat_dim; ++j) dropped.frames.at(t, j) *= mask[j];
    }
    input = &dropped;
  }

  ParamVars pv = make_param_leaves(tape, mp);
  const auto label = static_cast<std::size_t>(seq.label);

  if (opts.pooler == Pooler::mil) {
    Var logits = mil_forward(*input, pv.classifier, tape);
    Var probs = softmax(logits);
    Var loss = scale(pick(log(probs), label), -1.0);
    return {loss, logits, probs, {}, pv};
  }

  Var psi{};
  std::vector<Var> gammas;
  if (opts.pooler == Pooler::adascan) {
    ImportanceFn f_imp;
    if (opts.const_gamma) {
      const double g = *opts.const_gamma;
      f_imp = [&tape, g](Var) { return tape.leaf(Tensor::scalar(g)); };
    } else {
      f_imp = [&pv](Var residual) { return f_imp_forward(residual, pv.imp); };
    }
    PoolOutput pooled = adascan_pool(*input, f_imp, tape);
    psi = pooled.psi;
    gammas = std::move(pooled.gammas);
  } else {
    Tensor pooled = opts.pooler == Pooler::mean ? mean_pool(*input) : max_pool(*input);
    psi = tape.leaf(std::move(pooled));
  }

  if (drop) psi = cmul(psi, dropout_scale_mask(dims.feat_dim, hyper.dropout_p, *opts.rng));

  ClassifyOutput head = classify(psi, pv.classifier);
  Var loss = scale(pick(log(head.probs), label), -1.0);
  if (!gammas.empty() && hyper.lambda > 0.0 && hyper.reg_kind != RegKind::none) {
    Var reg = hyper.reg_kind == RegKind::entropy ? entropy_reg(gammas) : l1_reg(gammas);
    loss = add(loss, scale(reg, hyper.lambda));
  }
  return {loss, head.logits, head.probs, std::move(gammas), pv};
}

// The training objective: adaptive pooling followed by the classifier head.
inline LossOutput total_loss(const FeatureSequence& seq, const ModelParams& mp, Tape& tape,
                             const ForwardOptions& opts = {}) {
  ForwardOptions o = opts;
  o.pooler = Pooler::adascan;
  return pooled_loss(seq, mp, tape, o);
}

// Glorot-uniform weights, zero biases; deterministic given the seed.
inline ModelParams init_params(const Dims& dims, std::uint64_t seed) {
  require(dims.feat_dim >= 1 && dims.num_classes >= 1 && dims.h1 >= 1 && dims.h2 >= 1,
          "init_params: degenerate dimensions");
  std::mt19937_64 rng(seed);
  auto glorot = [&rng](std::size_t fan_out, std::size_t fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w({fan_out, fan_in});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = uniform_in(rng, -limit, limit);
    return w;
  };
  ModelParams p;
  p.imp.w1 = glorot(dims.h1, dims.feat_dim);
  p.imp.b1 = Tensor({dims.h1});
  p.imp.w2 = glorot(dims.h2, dims.h1);
  p.imp.b2 = Tensor({dims.h2});
  p.imp.w3 = glorot(1, dims.h2);
  p.imp.b3 = Tensor({1});
  p.classifier.w = glorot(dims.num_classes, dims.feat_dim);
  p.classifier.b = Tensor({dims.num_classes});
  p.hyper.hidden1 = dims.h1;
  p.hyper.hidden2 = dims.h2;
  p.hyper.seed = seed;
  return p;
}

}  // namespace adascan
