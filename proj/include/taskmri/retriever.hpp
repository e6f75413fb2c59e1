#pragma once

#include <cstdint>
#include <optional>

#include <torch/torch.h>

#include "taskmri/sampler.hpp"
#include "taskmri/unet.hpp"

namespace taskmri {

struct RetrieverConfig {
  int64_t num_cascades = 12;
  int64_t base_channels = 18;
  int64_t pool_levels = 4;
  int64_t sens_base_channels = 8;
  int64_t sens_pool_levels = 4;
  double eta_init = 1.0;
};

/// Conjugate-sensitivity coil reduction: sum_i conj(S_i) z_i over dim 1.
/// coil_images and sens are complex [B, C, H, W]; the result is [B, H, W].
torch::Tensor reduce_coils(const torch::Tensor& coil_images, const torch::Tensor& sens);
/// Sensitivity expansion: S_i x for each coil; [B, H, W] -> [B, C, H, W].
torch::Tensor expand_coils(const torch::Tensor& image, const torch::Tensor& sens);

/// Complex [..., H, W] <-> real [..., 2, H, W] channel planes.
torch::Tensor complex_to_planes(const torch::Tensor& z);
torch::Tensor planes_to_complex(const torch::Tensor& planes);

/// CNN coil-sensitivity estimation from the ACS block of each coil.
///
/// Each coil's ACS-only k-space is inverse transformed, refined independently
/// by a shared normalised U-Net, and the maps are divided by their per-pixel
/// RSS. A single coil always yields the all-ones map.
class SensitivityEstimatorImpl : public torch::nn::Module {
 public:
  SensitivityEstimatorImpl(int64_t base_channels, int64_t pool_levels);

  /// y: complex [B, C, H, W] measured k-space. Throws InvalidInput on an empty ACS.
  torch::Tensor forward(const torch::Tensor& y, const AcsRegion& acs);

 private:
  NormUNet unet_{nullptr};
};
TORCH_MODULE(SensitivityEstimator);

/// Refinement term G(k) = F E(UN(R F^-1 k)).
///
/// k and sens are complex [B, C, H, W].
class CascadeImpl : public torch::nn::Module {
 public:
  CascadeImpl(const UNetSpec& spec, double eta_init);

  /// One update k - eta * m * (k - y) + G(k). `mask` broadcasts against k.
  torch::Tensor forward(const torch::Tensor& k, const torch::Tensor& y, const torch::Tensor& mask,
                        const torch::Tensor& sens);
  torch::Tensor refinement(const torch::Tensor& k, const torch::Tensor& sens);

  torch::Tensor& eta() { return eta_; }
  NormUNet& unet() { return unet_; }
  /// When disabled the refinement term is identically zero.
  void set_refinement_enabled(bool enabled) { refinement_enabled_ = enabled; }
  bool refinement_enabled() const { return refinement_enabled_; }

 private:
  NormUNet unet_{nullptr};
  torch::Tensor eta_;
  bool refinement_enabled_ = true;
};
TORCH_MODULE(Cascade);

/// Data-consistency update with an externally supplied refinement term.
torch::Tensor cascade_update(const torch::Tensor& k, const torch::Tensor& y, const torch::Tensor& mask,
                             const torch::Tensor& eta, const torch::Tensor& refinement);

/// Unrolled k-space network: optional sensitivity estimation, a fixed number
/// of cascades, then inverse transform and RSS.
class RetrieverImpl : public torch::nn::Module {
 public:
  RetrieverImpl(const RetrieverConfig& config, bool multi_coil);

  /// y: complex [B, C, H, W] zero-filled measurements; mask: real [H, W] or
  /// broadcastable. Returns a real, nonnegative [B, H, W] image. Throws
  /// NumericalFailure with the cascade index when k-space turns non-finite.
  torch::Tensor forward(const torch::Tensor& y, const torch::Tensor& mask, const AcsRegion& acs);

  /// Sensitivities used for `y` (all ones for single-coil data).
  torch::Tensor sensitivities(const torch::Tensor& y, const AcsRegion& acs);

  const RetrieverConfig& config() const { return config_; }
  bool multi_coil() const { return multi_coil_; }
  int64_t num_cascades() const { return static_cast<int64_t>(cascades_.size()); }
  Cascade& cascade(size_t i) { return cascades_[i]; }
  void set_refinement_enabled(bool enabled);

 private:
  RetrieverConfig config_;
  bool multi_coil_;
  std::vector<Cascade> cascades_;
  SensitivityEstimator sens_net_{nullptr};
};
TORCH_MODULE(Retriever);

/// Zero-filled reconstruction: RSS of the per-coil inverse transform.
torch::Tensor zero_filled(const torch::Tensor& y);

}  // namespace taskmri
