#include "taskmri/retriever.hpp"

#include <string>

#include "taskmri/errors.hpp"
#include "taskmri/forward_model.hpp"

namespace taskmri {

torch::Tensor complex_to_planes(const torch::Tensor& z) {
  return torch::stack({torch::real(z), torch::imag(z)}, -3);
}

torch::Tensor planes_to_complex(const torch::Tensor& planes) {
  return torch::complex(planes.select(-3, 0).contiguous(), planes.select(-3, 1).contiguous());
}

torch::Tensor reduce_coils(const torch::Tensor& coil_images, const torch::Tensor& sens) {
  return (torch::conj(sens) * coil_images).sum(1);
}

torch::Tensor expand_coils(const torch::Tensor& image, const torch::Tensor& sens) {
  return sens * image.unsqueeze(1);
}

torch::Tensor zero_filled(const torch::Tensor& y) { return rss(ifft2c(y), 1); }

SensitivityEstimatorImpl::SensitivityEstimatorImpl(int64_t base_channels, int64_t pool_levels) {
  UNetSpec spec;
  spec.in_channels = 2;
  spec.out_channels = 2;
  spec.base_channels = base_channels;
  spec.num_pool_levels = pool_levels;
  unet_ = register_module("unet", NormUNet(spec));
}

torch::Tensor SensitivityEstimatorImpl::forward(const torch::Tensor& y, const AcsRegion& acs) {
  if (acs.empty()) throw Error(ErrorKind::InvalidInput, "sensitivity estimation needs a non-empty ACS region");
  const auto b = y.size(0);
  const auto c = y.size(1);
  const auto h = y.size(2);
  const auto w = y.size(3);
  if (c == 1) return torch::ones_like(y);
  auto acs_mask = acs.indicator(h, w).to(c10::toRealValueType(y.scalar_type()));
  auto images = ifft2c(y * acs_mask);
  auto planes = complex_to_planes(images.reshape({b * c, h, w}));
  auto refined = planes_to_complex(unet_->forward(planes)).reshape({b, c, h, w});
  auto norm = rss(refined, 1).clamp_min(1e-12).unsqueeze(1);
  return refined / norm;
}

CascadeImpl::CascadeImpl(const UNetSpec& spec, double eta_init) {
  unet_ = register_module("unet", NormUNet(spec));
  eta_ = register_parameter("eta", torch::full({1}, eta_init));
}

torch::Tensor CascadeImpl::refinement(const torch::Tensor& k, const torch::Tensor& sens) {
  if (!refinement_enabled_) return torch::zeros_like(k);
  auto image = reduce_coils(ifft2c(k), sens);
  auto refined = planes_to_complex(unet_->forward(complex_to_planes(image)));
  return fft2c(expand_coils(refined, sens));
}

torch::Tensor cascade_update(const torch::Tensor& k, const torch::Tensor& y, const torch::Tensor& mask,
                             const torch::Tensor& eta, const torch::Tensor& refinement) {
  return k - eta * mask * (k - y) + refinement;
}

torch::Tensor CascadeImpl::forward(const torch::Tensor& k, const torch::Tensor& y, const torch::Tensor& mask,
                                   const torch::Tensor& sens) {
  return cascade_update(k, y, mask, eta_, refinement(k, sens));
}

RetrieverImpl::RetrieverImpl(const RetrieverConfig& config, bool multi_coil)
    : config_(config), multi_coil_(multi_coil) {
  if (config.num_cascades < 0) throw Error(ErrorKind::InvalidInput, "negative cascade count");
  UNetSpec spec;
  spec.base_channels = config.base_channels;
  spec.num_pool_levels = config.pool_levels;
  for (int64_t t = 0; t < config.num_cascades; ++t) {
    cascades_.push_back(register_module("cascade" + std::to_string(t), Cascade(spec, config.eta_init)));
  }
  if (multi_coil) {
    sens_net_ = register_module("sens", SensitivityEstimator(config.sens_base_channels, config.sens_pool_levels));
  }
}

void RetrieverImpl::set_refinement_enabled(bool enabled) {
  for (auto& c : cascades_) c->set_refinement_enabled(enabled);
}

torch::Tensor RetrieverImpl::sensitivities(const torch::Tensor& y, const AcsRegion& acs) {
  if (!multi_coil_ || y.size(1) == 1) return torch::ones_like(y);
  return sens_net_->forward(y, acs);
}

torch::Tensor RetrieverImpl::forward(const torch::Tensor& y, const torch::Tensor& mask, const AcsRegion& acs) {
  if (y.dim() != 4 || !y.is_complex()) {
    throw Error(ErrorKind::InvalidInput, "retriever expects complex [B, C, H, W] measurements");
  }
  auto sens = sensitivities(y, acs);
  if (!torch::isfinite(sens).all().item<bool>()) {
    throw NumericalFailure(-1, "non-finite sensitivity estimate");
  }
  auto k = y;
  for (size_t t = 0; t < cascades_.size(); ++t) {
    k = cascades_[t]->forward(k, y, mask, sens);
    if (!torch::isfinite(k).all().item<bool>()) {
      throw NumericalFailure(static_cast<int>(t), "non-finite k-space after cascade " + std::to_string(t));
    }
  }
  return rss(ifft2c(k), 1);
}

}  // namespace taskmri
