#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adascan/sequence.hpp"
#include "adascan/tape.hpp"

namespace adascan {

enum class Pooler { adascan, mean, max, mil };

inline const char* to_string(Pooler p) {
  switch (p) {
    case Pooler::adascan: return "adascan";
    case Pooler::mean: return "mean";
    case Pooler::max: return "max";
    case Pooler::mil: return "mil";
  }
  return "?";
}

inline std::optional<Pooler> pooler_from_string(const std::string& s) {
  if (s == "adascan") return Pooler::adascan;
  if (s == "mean") return Pooler::mean;
  if (s == "max") return Pooler::max;
  if (s == "mil") return Pooler::mil;
  return std::nullopt;
}

// Maps the residual between the next frame and the pooled vector to an
// importance score in (0,1].
using ImportanceFn = std::function<Var(Var residual)>;

// Affine map y = W x + b as tape nodes.
struct AffineVars {
  Var w;
  Var b;
};

// Running pooled vector, cumulative weight and the importance trace.
// gamma_1 is fixed to 1 so the pooled vector starts at the first frame and
// the cumulative weight never drops below one.
struct PoolState {
  Var psi;
  Var gamma_hat;
  std::vector<Var> trace;
};

inline PoolState adascan_init(Tape& tape, Var first_frame) {
  Var one = tape.leaf(Tensor::scalar(1.0));
  return PoolState{first_frame, one, {one}};
}

inline void adascan_step(PoolState& state, Var frame, const ImportanceFn& f_imp) {
  Var residual = sub(frame, state.psi);
  Var gamma = f_imp(residual);
  require(gamma.value().is_scalar(), "adascan_step: importance must be scalar");
  const double g = gamma.value().item();
  require(g > 0.0 && g <= 1.0, "adascan_step: importance must lie in (0,1]");
  Var gamma_hat_next = add(state.gamma_hat, gamma);
  Var numer = add(smul(state.gamma_hat, state.psi), smul(gamma, frame));
  state.psi = sdiv(numer, gamma_hat_next);
  state.gamma_hat = gamma_hat_next;
  state.trace.push_back(gamma);
}

struct PoolOutput {
  Var psi;
  std::vector<Var> gammas;
};

// Single temporal scan: recursive importance-weighted mean of the frames,
// recorded on the tape so gradients flow through the recurrence.
inline PoolOutput adascan_pool(const FeatureSequence& seq, const ImportanceFn& f_imp, Tape& tape) {
  require(seq.length() >= 1, "adascan_pool: empty sequence");
  PoolState state = adascan_init(tape, tape.leaf(frame_row(seq.frames, 0)));
  for (std::size_t t = 1; t < seq.length(); ++t) {
    adascan_step(state, tape.leaf(frame_row(seq.frames, t)), f_imp);
  }
  return {state.psi, state.trace};
}

// Non-recursive equivalent sum_t gamma_t phi_t / sum_t gamma_t; the
// recursion's test oracle.
inline Tensor weighted_mean_closed_form(const Tensor& frames, std::span<const double> gammas) {
  require(frames.rank() == 2, "weighted_mean_closed_form: frames must be T x D");
  require(frames.rows() == gammas.size(), "weighted_mean_closed_form: weight count mismatch");
  double wsum = 0.0;
  for (double g : gammas) {
    require(g > 0.0, "weighted_mean_closed_form: weights must be positive");
    wsum += g;
  }
  require(wsum > 0.0, "weighted_mean_closed_form: zero weight sum");
  Tensor out({frames.cols()});
  for (std::size_t t = 0; t < frames.rows(); ++t) {
    for (std::size_t j = 0; j < frames.cols(); ++j) out[j] += gammas[t] * frames.at(t, j);
  }
  for (std::size_t j = 0; j < out.size(); ++j) out[j] /= wsum;
  return out;
}

inline Tensor weighted_mean_closed_form(const Tensor& frames, const std::vector<double>& gammas) {
  return weighted_mean_closed_form(frames, std::span<const double>(gammas.data(), gammas.size()));
}

inline Tensor mean_pool(const FeatureSequence& seq) {
  const std::size_t t_len = seq.length();
  require(t_len >= 1, "mean_pool: empty sequence");
  Tensor out({seq.feat_dim()});
  for (std::size_t t = 0; t < t_len; ++t) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += seq.frames.at(t, j);
  }
  for (std::size_t j = 0; j < out.size(); ++j) out[j] /= static_cast<double>(t_len);
  return out;
}

inline Tensor max_pool(const FeatureSequence& seq) {
  const std::size_t t_len = seq.length();
  require(t_len >= 1, "max_pool: empty sequence");
  Tensor out = frame_row(seq.frames, 0);
  for (std::size_t t = 1; t < t_len; ++t) {
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = std::max(out[j], seq.frames.at(t, j));
  }
  return out;
}

// Per-frame class scores maxed over time per class, before any softmax.
// Subgradient routes to the argmax frame; ties break to the lowest index.
inline Var mil_forward(const FeatureSequence& seq, const AffineVars& classifier, Tape& tape) {
  require(seq.length() >= 1, "mil_forward: empty sequence");
  std::vector<Var> scores;
  scores.reserve(seq.length());
  for (std::size_t t = 0; t < seq.length(); ++t) {
    Var frame = tape.leaf(frame_row(seq.frames, t));
    scores.push_back(add(matvec(classifier.w, frame), classifier.b));
  }
  return coordinate_max(scores);
}

}  // namespace adascan
