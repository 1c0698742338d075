#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adascan/tensor.hpp"

namespace adascan {

// One sample: T frame-feature rows and a class label. The optional mask
// marks frames carrying planted signal in synthetic data.
struct FeatureSequence {
  Tensor frames;  // T x D
  int label = 0;
  std::string id;
  std::optional<std::vector<std::uint8_t>> signal_mask;

  std::size_t length() const { return frames.rank() == 2 ? frames.rows() : 0; }
  std::size_t feat_dim() const { return frames.rank() == 2 ? frames.cols() : 0; }
};

inline Tensor frame_row(const Tensor& frames, std::size_t t) {
  const std::size_t d = frames.cols();
  require(t < frames.rows(), "frame_row: index out of range");
  Tensor row({d});
  for (std::size_t j = 0; j < d; ++j) row[j] = frames.at(t, j);
  return row;
}

}  // namespace adascan
