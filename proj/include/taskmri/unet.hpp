#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace taskmri {

enum class Activation { LeakyReLU, PReLU };
enum class Normalization { Instance, None };
enum class Padding { Zeros, Replicate };

struct UNetSpec {
  int64_t in_channels = 2;
  int64_t out_channels = 2;
  int64_t base_channels = 18;
  int64_t num_pool_levels = 4;
  Activation activation = Activation::LeakyReLU;
  Normalization normalization = Normalization::Instance;
  Padding padding = Padding::Zeros;
  double negative_slope = 0.2;
};

/// 3x3 conv -> norm -> activation, twice.
class ConvBlockImpl : public torch::nn::Module {
 public:
  ConvBlockImpl(int64_t in_channels, int64_t out_channels, const UNetSpec& spec);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential layers_{nullptr};
};
TORCH_MODULE(ConvBlock);

/// 2x2 transposed conv (stride 2) -> norm -> activation.
class UpBlockImpl : public torch::nn::Module {
 public:
  UpBlockImpl(int64_t in_channels, int64_t out_channels, const UNetSpec& spec);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Sequential layers_{nullptr};
};
TORCH_MODULE(UpBlock);

/// Encoder/decoder with average pooling and skip connections. Channels double
/// at each downsampling level. Spatial sizes must be divisible by
/// 2^num_pool_levels; NormUNet handles padding.
class UNetImpl : public torch::nn::Module {
 public:
  explicit UNetImpl(const UNetSpec& spec);
  torch::Tensor forward(torch::Tensor x);

  const UNetSpec& spec() const { return spec_; }
  /// Final 1x1 convolution producing the output channels.
  torch::nn::Conv2d& head() { return head_; }

 private:
  UNetSpec spec_;
  torch::nn::ModuleList down_;
  ConvBlock bottleneck_{nullptr};
  torch::nn::ModuleList up_transpose_;
  torch::nn::ModuleList up_conv_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(UNet);

/// Zero-pads the spatial dims of x (N, C, H, W) symmetrically up to multiples
/// of `multiple`. Returns the padded tensor and the {top, bottom, left, right}
/// amounts so `crop_padding` can undo it.
std::pair<torch::Tensor, std::array<int64_t, 4>> pad_to_multiple(const torch::Tensor& x, int64_t multiple);
torch::Tensor crop_padding(const torch::Tensor& x, const std::array<int64_t, 4>& pads);

/// U-Net wrapped with per-instance standardisation: the input is shifted to
/// zero mean and unit standard deviation (statistics over all channels and
/// pixels jointly) and the output is mapped back to the original mean and
/// standard deviation.
class NormUNetImpl : public torch::nn::Module {
 public:
  explicit NormUNetImpl(const UNetSpec& spec);
  torch::Tensor forward(const torch::Tensor& x);

  UNet& unet() { return unet_; }

 private:
  UNet unet_{nullptr};
};
TORCH_MODULE(NormUNet);

/// Per-instance standardisation over (C, H, W). Returns {normalised, mean, std}.
std::tuple<torch::Tensor, torch::Tensor, torch::Tensor> standardize(const torch::Tensor& x);

}  // namespace taskmri
