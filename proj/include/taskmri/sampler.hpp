#pragma once

#include <cstdint>
#include <optional>

#include <torch/torch.h>

#include "taskmri/mask.hpp"

namespace taskmri {

/// Pre-selected low-frequency square around DC (auto-calibration region).
struct AcsRegion {
  int64_t height = 0;
  int64_t width = 0;

  int64_t size() const { return height * width; }
  bool empty() const { return size() == 0; }

  /// Largest centred square with area <= budget / 8; even sides when the side
  /// is at least 2. 256x256 at R=8 (budget 8192) gives 32x32.
  static AcsRegion for_budget(int64_t budget);

  /// First row/column covered on an H x W grid with DC at (H/2, W/2).
  int64_t top(int64_t grid_height) const { return grid_height / 2 - height / 2; }
  int64_t left(int64_t grid_width) const { return grid_width / 2 - width / 2; }

  /// Boolean H x W indicator of the region.
  torch::Tensor indicator(int64_t grid_height, int64_t grid_width) const;
};

/// Count tolerance for training draws: max(1, round(0.02 * budget)).
int64_t budget_tolerance(int64_t budget);

/// Maximum number of Bernoulli redraws before the closest draw is returned.
inline constexpr int kMaxMaskRedraws = 100;

/// Rescales probabilities so their sum equals `budget` in expectation.
///
/// With alpha = budget/n and beta = mean(p_tilde):
///   p = (alpha/beta) p_tilde                      if beta >= alpha
///   p = 1 - (1-alpha)/(1-beta) (1 - p_tilde)      otherwise
/// Differentiable in `p_tilde`. Throws InvalidBudget when budget > n or < 0.
torch::Tensor rescale_probs(const torch::Tensor& p_tilde, double budget);

/// Straight-through binarisation: the forward value is `hard`, the backward
/// pass hands the incoming gradient to `probs` unchanged.
torch::Tensor straight_through(const torch::Tensor& hard, const torch::Tensor& probs);

/// Backward rule of the straight-through step (identity Jacobian).
inline torch::Tensor ste_backward(const torch::Tensor& gradient_at_mask) { return gradient_at_mask; }

/// Learnable Bernoulli sampler over an H x W Cartesian grid.
///
/// The logits `q` cover every location, but ACS locations are hard-wired to 1
/// and only the non-ACS grid shares the remaining budget b - |acs|.
class SamplerImpl : public torch::nn::Module {
 public:
  SamplerImpl(int64_t height, int64_t width, int64_t budget, uint64_t seed,
              std::optional<AcsRegion> acs = std::nullopt);

  int64_t height() const { return height_; }
  int64_t width() const { return width_; }
  int64_t budget() const { return budget_; }
  const AcsRegion& acs() const { return acs_; }
  torch::Tensor acs_indicator() const { return acs_mask_; }
  torch::Tensor& logits() { return q_; }
  const torch::Tensor& logits() const { return q_; }

  /// Full-grid sampling probabilities (ACS entries exactly 1), differentiable in q.
  torch::Tensor probabilities() const;

  /// Bernoulli draw with redraws until the count is within tolerance.
  SamplingMask draw_training_mask(torch::Generator& generator) const;
  SamplingMask draw_training_mask(uint64_t seed) const;

  /// Hard training mask carrying straight-through gradients to q.
  torch::Tensor relaxed_training_mask(torch::Generator& generator) const;

  /// ACS plus the budget - |acs| non-ACS locations with the largest logits,
  /// ties by row-major index. Ranking by logits equals ranking by p because
  /// sigmoid and the rescale are increasing.
  SamplingMask binarize_eval_mask() const;

 private:
  int64_t height_;
  int64_t width_;
  int64_t budget_;
  AcsRegion acs_;
  torch::Tensor acs_mask_;
  torch::Tensor q_;
};
TORCH_MODULE(Sampler);

/// Variable-density Poisson-disc pattern. The exclusion radius grows linearly
/// with distance d from DC, r(d) = r0 (1 + d / d_max); two accepted samples are
/// at least max(r_a, r_b) apart. r0 is bisected until the count lands within
/// max(1, 0.02 b) of the budget. ACS is always included.
SamplingMask make_poisson_disc_mask(int64_t height, int64_t width, int64_t budget, const AcsRegion& acs,
                                    uint64_t seed);

/// Exclusion radius used by make_poisson_disc_mask for a point at (row, col).
double poisson_disc_radius(double r0, int64_t row, int64_t col, int64_t height, int64_t width);

/// Result of a Poisson-disc generation with the radius that produced it.
struct PoissonDiscResult {
  SamplingMask mask;
  double r0 = 0.0;
};
PoissonDiscResult make_poisson_disc_mask_with_radius(int64_t height, int64_t width, int64_t budget,
                                                     const AcsRegion& acs, uint64_t seed);

/// The `budget` locations closest to DC, ties by row-major index.
SamplingMask make_lowpass_mask(int64_t height, int64_t width, int64_t budget);

}  // namespace taskmri
