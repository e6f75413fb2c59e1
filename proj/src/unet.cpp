#include "taskmri/unet.hpp"

#include "taskmri/errors.hpp"

namespace taskmri {

namespace {

namespace nn = torch::nn;

void append_norm_act(nn::Sequential& seq, int64_t channels, const UNetSpec& spec) {
  if (spec.normalization == Normalization::Instance) {
    seq->push_back(nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels)));
  }
  if (spec.activation == Activation::LeakyReLU) {
    seq->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(spec.negative_slope)));
  } else {
    seq->push_back(nn::PReLU(nn::PReLUOptions().num_parameters(channels)));
  }
}

nn::Conv2d conv3x3(int64_t in, int64_t out, const UNetSpec& spec) {
  auto opts = nn::Conv2dOptions(in, out, 3).padding(1).bias(false);
  if (spec.padding == Padding::Replicate) opts.padding_mode(torch::kReplicate);
  return nn::Conv2d(opts);
}

}  // namespace

ConvBlockImpl::ConvBlockImpl(int64_t in_channels, int64_t out_channels, const UNetSpec& spec) {
  layers_ = nn::Sequential();
  layers_->push_back(conv3x3(in_channels, out_channels, spec));
  append_norm_act(layers_, out_channels, spec);
  layers_->push_back(conv3x3(out_channels, out_channels, spec));
  append_norm_act(layers_, out_channels, spec);
  register_module("layers", layers_);
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x) { return layers_->forward(x); }

UpBlockImpl::UpBlockImpl(int64_t in_channels, int64_t out_channels, const UNetSpec& spec) {
  layers_ = nn::Sequential();
  layers_->push_back(
      nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in_channels, out_channels, 2).stride(2).bias(false)));
  append_norm_act(layers_, out_channels, spec);
  register_module("layers", layers_);
}

torch::Tensor UpBlockImpl::forward(const torch::Tensor& x) { return layers_->forward(x); }

UNetImpl::UNetImpl(const UNetSpec& spec) : spec_(spec) {
  if (spec.num_pool_levels < 1 || spec.base_channels < 1) {
    throw Error(ErrorKind::InvalidInput, "U-Net needs at least one pool level and one channel");
  }
  int64_t ch = spec.base_channels;
  down_->push_back(ConvBlock(spec.in_channels, ch, spec));
  for (int64_t i = 1; i < spec.num_pool_levels; ++i) {
    down_->push_back(ConvBlock(ch, ch * 2, spec));
    ch *= 2;
  }
  bottleneck_ = ConvBlock(ch, ch * 2, spec);
  for (int64_t i = 0; i < spec.num_pool_levels; ++i) {
    up_transpose_->push_back(UpBlock(ch * 2, ch, spec));
    up_conv_->push_back(ConvBlock(ch * 2, ch, spec));
    ch /= 2;
  }
  head_ = nn::Conv2d(nn::Conv2dOptions(spec.base_channels, spec.out_channels, 1));
  register_module("down", down_);
  register_module("bottleneck", bottleneck_);
  register_module("up_transpose", up_transpose_);
  register_module("up_conv", up_conv_);
  register_module("head", head_);
}

torch::Tensor UNetImpl::forward(torch::Tensor x) {
  std::vector<torch::Tensor> skips;
  skips.reserve(down_->size());
  for (const auto& block : *down_) {
    x = block->as<ConvBlock>()->forward(x);
    skips.push_back(x);
    x = torch::avg_pool2d(x, 2);
  }
  x = bottleneck_->forward(x);
  for (size_t i = 0; i < up_transpose_->size(); ++i) {
    x = up_transpose_[i]->as<UpBlock>()->forward(x);
    x = torch::cat({x, skips.back()}, 1);
    skips.pop_back();
    x = up_conv_[i]->as<ConvBlock>()->forward(x);
  }
  return head_->forward(x);
}

std::pair<torch::Tensor, std::array<int64_t, 4>> pad_to_multiple(const torch::Tensor& x, int64_t multiple) {
  const auto h = x.size(-2);
  const auto w = x.size(-1);
  const auto ph = (multiple - h % multiple) % multiple;
  const auto pw = (multiple - w % multiple) % multiple;
  std::array<int64_t, 4> pads{ph / 2, ph - ph / 2, pw / 2, pw - pw / 2};
  if (ph == 0 && pw == 0) return {x, pads};
  auto padded = torch::constant_pad_nd(x, {pads[2], pads[3], pads[0], pads[1]}, 0.0);
  return {padded, pads};
}

torch::Tensor crop_padding(const torch::Tensor& x, const std::array<int64_t, 4>& pads) {
  using torch::indexing::Ellipsis;
  using torch::indexing::Slice;
  const auto h = x.size(-2);
  const auto w = x.size(-1);
  return x.index({Ellipsis, Slice(pads[0], h - pads[1]), Slice(pads[2], w - pads[3])});
}

std::tuple<torch::Tensor, torch::Tensor, torch::Tensor> standardize(const torch::Tensor& x) {
  const std::vector<int64_t> dims{1, 2, 3};
  auto mean = x.mean(dims, true);
  auto std = (x - mean).square().mean(dims, true).add(1e-12).sqrt();
  return {(x - mean) / std, mean, std};
}

NormUNetImpl::NormUNetImpl(const UNetSpec& spec) { unet_ = register_module("unet", UNet(spec)); }

torch::Tensor NormUNetImpl::forward(const torch::Tensor& x) {
  auto [normed, mean, std] = standardize(x);
  auto [padded, pads] = pad_to_multiple(normed, int64_t{1} << unet_->spec().num_pool_levels);
  auto out = crop_padding(unet_->forward(padded), pads);
  return out * std + mean;
}

}  // namespace taskmri
