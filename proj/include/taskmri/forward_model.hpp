#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "taskmri/mask.hpp"

namespace taskmri {

enum class Domain { Image, KSpace };

/// A 2D complex grid holding either an image or its DC-centered k-space.
///
/// The payload is a complex64 or complex128 tensor of shape H x W. Construction
/// rejects non-finite entries.
class ComplexGrid {
 public:
  ComplexGrid(torch::Tensor data, Domain domain);

  /// Builds a grid from a real [2, H, W] tensor of real/imaginary planes.
  static ComplexGrid from_planes(const torch::Tensor& planes, Domain domain);

  const torch::Tensor& data() const noexcept { return data_; }
  Domain domain() const noexcept { return domain_; }
  int64_t height() const { return data_.size(0); }
  int64_t width() const { return data_.size(1); }
  /// DC sits at (H/2, W/2); there is no other convention in this library.
  static constexpr bool dc_centered = true;

  /// Real [2, H, W] view: channel 0 real part, channel 1 imaginary part.
  torch::Tensor planes() const;
  torch::Tensor magnitude() const;

 private:
  torch::Tensor data_;
  Domain domain_;
};

// Orthonormal centered transforms over the last two dimensions. These accept
// any batch shape and are differentiable; the ComplexGrid overloads validate
// domain tags and finiteness.
torch::Tensor fft2c(const torch::Tensor& image);
torch::Tensor ifft2c(const torch::Tensor& kspace);
ComplexGrid fft2c(const ComplexGrid& image);
ComplexGrid ifft2c(const ComplexGrid& kspace);

/// Complex white Gaussian measurement noise. The standard deviation of each
/// real and imaginary component is `relative_sigma * |DC|` of the noise-free
/// k-space it is added to.
struct NoiseModel {
  double relative_sigma = 0.0;
  uint64_t seed = 0;
};

/// Per-coil k-space measurements with optional image-domain sensitivities.
struct CoilSet {
  std::vector<ComplexGrid> coil_kspaces;
  std::optional<std::vector<ComplexGrid>> sensitivities;

  int64_t num_coils() const { return static_cast<int64_t>(coil_kspaces.size()); }
  int64_t height() const;
  int64_t width() const;
  /// Coil k-spaces stacked into a complex [C, H, W] tensor.
  torch::Tensor stacked() const;
  /// Throws InvalidInput when coils are missing or shapes disagree.
  void validate() const;
};

/// Single-coil measurement m * (F x + n).
ComplexGrid simulate_single_coil(const ComplexGrid& image, const SamplingMask& mask,
                                 const NoiseModel& noise);

/// Multi-coil measurement m * (F (S_i x) + n_i), independent noise per coil.
CoilSet simulate_multi_coil(const ComplexGrid& image, std::span<const ComplexGrid> sensitivities,
                            const SamplingMask& mask, const NoiseModel& noise);

/// Adds noise to full k-space and applies a (possibly relaxed) mask.
///
/// `kspace` is complex [..., H, W]; the noise scale is taken per leading index
/// from the DC entry. `mask` broadcasts against `kspace`. Gradients flow into
/// `mask` so this is the measurement step used inside training graphs.
torch::Tensor measure(const torch::Tensor& kspace, const torch::Tensor& mask,
                      double relative_sigma, torch::Generator& generator);

/// Root-sum-of-squares combination: sqrt(sum_i |z_i|^2) per pixel.
torch::Tensor rss_combine(std::span<const ComplexGrid> coil_images);
/// Tensor form over dimension `coil_dim`; differentiable with a zero gradient
/// where all coils vanish.
torch::Tensor rss(const torch::Tensor& coil_images, int64_t coil_dim);

/// Smooth synthetic coil sensitivities with per-pixel RSS equal to one.
///
/// Coil magnitudes are Gaussian bumps centred on points spread evenly around
/// the field of view; `smoothness` is the bump width as a fraction of the
/// smaller grid side. Each coil carries a constant phase 2*pi*i/num_coils.
std::vector<ComplexGrid> synthesize_sensitivities(int64_t num_coils, int64_t height, int64_t width,
                                                  double smoothness);

}  // namespace taskmri
