#include "taskmri/predictors.hpp"

#include "taskmri/errors.hpp"

namespace taskmri {

namespace nn = torch::nn;

torch::Tensor standardize_images(const torch::Tensor& images) {
  const std::vector<int64_t> dims{-2, -1};
  auto mean = images.mean(dims, true);
  auto std = (images - mean).square().mean(dims, true).add(1e-12).sqrt();
  return (images - mean) / std;
}

SegPredictorImpl::SegPredictorImpl(const SegPredictorSpec& spec) : spec_(spec) {
  if (spec.num_classes < 2) throw Error(ErrorKind::InvalidInput, "segmentation needs at least two classes");
  UNetSpec u;
  u.in_channels = 1;
  u.out_channels = spec.num_classes;
  u.base_channels = spec.base_channels;
  u.num_pool_levels = spec.pool_levels;
  u.activation = Activation::PReLU;
  u.padding = Padding::Replicate;
  unet_ = register_module("unet", UNet(u));
}

torch::Tensor SegPredictorImpl::forward(const torch::Tensor& image) {
  auto x = standardize_images(image).unsqueeze(1);
  auto [padded, pads] = pad_to_multiple(x, int64_t{1} << spec_.pool_levels);
  auto scores = crop_padding(unet_->forward(padded), pads);
  if (!torch::isfinite(scores).all().item<bool>()) throw NumericalFailure(-1, "non-finite segmentation scores");
  return scores;
}

BasicBlockImpl::BasicBlockImpl(int64_t in_channels, int64_t out_channels, int64_t stride) {
  conv1_ = register_module(
      "conv1", nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 3).stride(stride).padding(1).bias(false)));
  bn1_ = register_module("bn1", nn::BatchNorm2d(out_channels));
  conv2_ = register_module("conv2",
                           nn::Conv2d(nn::Conv2dOptions(out_channels, out_channels, 3).padding(1).bias(false)));
  bn2_ = register_module("bn2", nn::BatchNorm2d(out_channels));
  if (stride != 1 || in_channels != out_channels) {
    downsample_ = register_module(
        "downsample",
        nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in_channels, out_channels, 1).stride(stride).bias(false)),
                       nn::BatchNorm2d(out_channels)));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto out = torch::relu(bn1_->forward(conv1_->forward(x)));
  out = bn2_->forward(conv2_->forward(out));
  auto identity = downsample_ ? downsample_->forward(x) : x;
  return torch::relu(out + identity);
}

ClsPredictorImpl::ClsPredictorImpl(const ClsPredictorSpec& spec) : spec_(spec) {
  if (spec.blocks_per_stage.empty()) throw Error(ErrorKind::InvalidInput, "classifier needs at least one stage");
  const auto base = spec.base_channels;
  stem_ = register_module(
      "stem", nn::Sequential(nn::Conv2d(nn::Conv2dOptions(1, base, 7).stride(2).padding(3).bias(false)),
                             nn::BatchNorm2d(base), nn::ReLU(),
                             nn::MaxPool2d(nn::MaxPool2dOptions(3).stride(2).padding(1))));
  stages_ = nn::Sequential();
  int64_t ch = base;
  for (size_t s = 0; s < spec.blocks_per_stage.size(); ++s) {
    const int64_t out = base << s;
    for (int64_t b = 0; b < spec.blocks_per_stage[s]; ++b) {
      const int64_t stride = (s > 0 && b == 0) ? 2 : 1;
      stages_->push_back(BasicBlock(ch, out, stride));
      ch = out;
    }
  }
  register_module("stages", stages_);
  fc_ = register_module("fc", nn::Linear(ch, spec.num_outputs));
}

torch::Tensor ClsPredictorImpl::forward(const torch::Tensor& image) {
  auto x = standardize_images(image).unsqueeze(1);
  x = stages_->forward(stem_->forward(x));
  x = torch::adaptive_avg_pool2d(x, {1, 1}).flatten(1);
  auto logits = fc_->forward(x);
  if (!torch::isfinite(logits).all().item<bool>()) throw NumericalFailure(-1, "non-finite classifier logits");
  return logits;
}

torch::Tensor binarize_segmentation(const torch::Tensor& scores) {
  const int64_t class_dim = scores.dim() == 4 ? 1 : 0;
  // argmax returns the first maximal index, which is the lowest class on ties
  auto idx = scores.argmax(class_dim);
  auto onehot = torch::nn::functional::one_hot(idx, scores.size(class_dim)).to(scores.scalar_type());
  return onehot.movedim(-1, class_dim).contiguous();
}

}  // namespace taskmri
