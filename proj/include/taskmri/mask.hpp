#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace taskmri {

/// Cartesian k-space sampling pattern, DC at (H/2, W/2).
///
/// `values` is a real H x W tensor. Binary masks hold exactly 0 or 1; a
/// probabilistic mask (`is_binary == false`) holds per-location sampling
/// probabilities.
struct SamplingMask {
  torch::Tensor values;
  bool is_binary = true;

  int64_t height() const { return values.size(0); }
  int64_t width() const { return values.size(1); }
  /// Number of sampled locations (sum of entries).
  int64_t count() const;
  /// Fraction of the grid that is sampled.
  double sampling_rate() const;
};

/// Full mask of ones.
SamplingMask full_mask(int64_t height, int64_t width);

}  // namespace taskmri
