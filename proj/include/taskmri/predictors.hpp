#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "taskmri/unet.hpp"

namespace taskmri {

struct SegPredictorSpec {
  int64_t num_classes = 5;  // background counts as class 0
  int64_t base_channels = 64;
  int64_t pool_levels = 4;
};

/// Residual classifier; defaults reproduce the 18-layer layout
/// (four stages of two basic blocks, widths 64-128-256-512).
struct ClsPredictorSpec {
  int64_t base_channels = 64;
  std::vector<int64_t> blocks_per_stage{2, 2, 2, 2};
  int64_t num_outputs = 2;
};

/// Segmentation head: U-Net with PReLU activations on a standardised
/// single-channel input. Returns raw class scores [B, c, H, W]; softmax is
/// applied by the loss and metrics.
class SegPredictorImpl : public torch::nn::Module {
 public:
  explicit SegPredictorImpl(const SegPredictorSpec& spec);
  /// image: real [B, H, W]. Throws NumericalFailure on non-finite scores.
  torch::Tensor forward(const torch::Tensor& image);
  const SegPredictorSpec& spec() const { return spec_; }

 private:
  SegPredictorSpec spec_;
  UNet unet_{nullptr};
};
TORCH_MODULE(SegPredictor);

class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(int64_t in_channels, int64_t out_channels, int64_t stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr};
  torch::nn::Sequential downsample_{nullptr};
};
TORCH_MODULE(BasicBlock);

/// Classification head: residual network with one input channel and global
/// average pooling, so any input size >= 32 x 32 works. Returns [B, 2] logits
/// (class 0 no lesion, class 1 lesion).
class ClsPredictorImpl : public torch::nn::Module {
 public:
  explicit ClsPredictorImpl(const ClsPredictorSpec& spec);
  torch::Tensor forward(const torch::Tensor& image);
  const ClsPredictorSpec& spec() const { return spec_; }

 private:
  ClsPredictorSpec spec_;
  torch::nn::Sequential stem_{nullptr};
  torch::nn::Sequential stages_{nullptr};
  torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(ClsPredictor);

/// One-hot argmax over dim 1 of [B, c, H, W] (or dim 0 of [c, H, W]); ties go
/// to the lowest class index.
torch::Tensor binarize_segmentation(const torch::Tensor& scores);

/// Per-image standardisation of a real [B, H, W] batch.
torch::Tensor standardize_images(const torch::Tensor& images);

}  // namespace taskmri
