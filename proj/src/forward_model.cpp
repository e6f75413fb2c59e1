#include "taskmri/forward_model.hpp"

#include <cmath>
#include <numbers>

#include <ATen/CPUGeneratorImpl.h>

#include "taskmri/errors.hpp"
#include "taskmri/random.hpp"

namespace taskmri {

torch::Generator make_generator(uint64_t seed) { return at::detail::createCPUGenerator(seed); }

namespace {

uint64_t splitmix(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void require_finite(const torch::Tensor& t, const char* what) {
  if (!torch::isfinite(t).all().item<bool>()) {
    throw Error(ErrorKind::InvalidInput, std::string(what) + " contains non-finite values");
  }
}

const std::vector<int64_t> kGridDims{-2, -1};

}  // namespace

uint64_t derive_seed(uint64_t base, std::string_view label) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return splitmix(base ^ splitmix(h));
}

uint64_t derive_seed(uint64_t base, uint64_t index) { return splitmix(base ^ splitmix(index + 0x632be59bd9b4e019ULL)); }

int64_t SamplingMask::count() const { return static_cast<int64_t>(std::llround(values.sum().item<double>())); }

double SamplingMask::sampling_rate() const {
  return values.sum().item<double>() / static_cast<double>(values.numel());
}

SamplingMask full_mask(int64_t height, int64_t width) { return {torch::ones({height, width}), true}; }

ComplexGrid::ComplexGrid(torch::Tensor data, Domain domain) : data_(std::move(data)), domain_(domain) {
  if (data_.dim() != 2 || data_.size(0) < 1 || data_.size(1) < 1) {
    throw Error(ErrorKind::InvalidInput, "ComplexGrid needs a non-empty H x W tensor");
  }
  if (!data_.is_complex()) {
    data_ = data_.to(data_.scalar_type() == torch::kFloat64 ? torch::kComplexDouble : torch::kComplexFloat);
  }
  require_finite(data_, "ComplexGrid");
}

ComplexGrid ComplexGrid::from_planes(const torch::Tensor& planes, Domain domain) {
  if (planes.dim() != 3 || planes.size(0) != 2) {
    throw Error(ErrorKind::InvalidInput, "planes must have shape [2, H, W]");
  }
  return ComplexGrid(torch::complex(planes[0].contiguous(), planes[1].contiguous()), domain);
}

torch::Tensor ComplexGrid::planes() const { return torch::stack({torch::real(data_), torch::imag(data_)}); }

torch::Tensor ComplexGrid::magnitude() const { return data_.abs(); }

torch::Tensor fft2c(const torch::Tensor& image) {
  auto shifted = torch::fft::ifftshift(image, kGridDims);
  auto k = torch::fft::fft2(shifted, c10::nullopt, kGridDims, "ortho");
  return torch::fft::fftshift(k, kGridDims);
}

torch::Tensor ifft2c(const torch::Tensor& kspace) {
  auto shifted = torch::fft::ifftshift(kspace, kGridDims);
  auto x = torch::fft::ifft2(shifted, c10::nullopt, kGridDims, "ortho");
  return torch::fft::fftshift(x, kGridDims);
}

ComplexGrid fft2c(const ComplexGrid& image) {
  if (image.domain() != Domain::Image) throw Error(ErrorKind::InvalidInput, "fft2c expects an image-domain grid");
  return ComplexGrid(fft2c(image.data()), Domain::KSpace);
}

ComplexGrid ifft2c(const ComplexGrid& kspace) {
  if (kspace.domain() != Domain::KSpace) throw Error(ErrorKind::InvalidInput, "ifft2c expects a k-space grid");
  return ComplexGrid(ifft2c(kspace.data()), Domain::Image);
}

int64_t CoilSet::height() const { return coil_kspaces.front().height(); }
int64_t CoilSet::width() const { return coil_kspaces.front().width(); }

torch::Tensor CoilSet::stacked() const {
  std::vector<torch::Tensor> parts;
  parts.reserve(coil_kspaces.size());
  for (const auto& g : coil_kspaces) parts.push_back(g.data());
  return torch::stack(parts);
}

void CoilSet::validate() const {
  if (coil_kspaces.empty()) throw Error(ErrorKind::InvalidInput, "CoilSet has no coils");
  const auto h = height();
  const auto w = width();
  for (const auto& g : coil_kspaces) {
    if (g.height() != h || g.width() != w) throw Error(ErrorKind::InvalidInput, "coil shapes disagree");
  }
  if (sensitivities) {
    if (sensitivities->size() != coil_kspaces.size()) {
      throw Error(ErrorKind::InvalidInput, "sensitivity count does not match coil count");
    }
    for (const auto& s : *sensitivities) {
      if (s.height() != h || s.width() != w) throw Error(ErrorKind::InvalidInput, "sensitivity shape mismatch");
    }
  }
}

torch::Tensor measure(const torch::Tensor& kspace, const torch::Tensor& mask, double relative_sigma,
                      torch::Generator& generator) {
  if (relative_sigma < 0) throw Error(ErrorKind::InvalidInput, "relative_sigma must be nonnegative");
  if (relative_sigma == 0) return mask * kspace;
  const auto h = kspace.size(-2);
  const auto w = kspace.size(-1);
  auto dc = kspace.detach().index({torch::indexing::Ellipsis, h / 2, w / 2}).abs();
  auto sigma = (dc * relative_sigma).unsqueeze(-1).unsqueeze(-1);
  auto lead = kspace.sizes().vec();
  lead.pop_back();
  lead.pop_back();
  auto shape = lead;
  shape.push_back(2);
  shape.push_back(h);
  shape.push_back(w);
  auto real_dtype = c10::toRealValueType(kspace.scalar_type());
  auto draws = torch::randn(shape, generator, torch::TensorOptions().dtype(real_dtype));
  auto noise = torch::complex(draws.select(-3, 0), draws.select(-3, 1)) * sigma;
  return mask * (kspace + noise);
}

namespace {

void check_mask_shape(const SamplingMask& mask, int64_t h, int64_t w) {
  if (mask.values.dim() != 2 || mask.height() != h || mask.width() != w) {
    throw Error(ErrorKind::InvalidInput, "mask shape does not match image shape");
  }
}

}  // namespace

ComplexGrid simulate_single_coil(const ComplexGrid& image, const SamplingMask& mask, const NoiseModel& noise) {
  check_mask_shape(mask, image.height(), image.width());
  auto gen = make_generator(noise.seed);
  auto k = fft2c(image.data());
  auto m = mask.values.to(c10::toRealValueType(k.scalar_type()));
  return ComplexGrid(measure(k, m, noise.relative_sigma, gen), Domain::KSpace);
}

CoilSet simulate_multi_coil(const ComplexGrid& image, std::span<const ComplexGrid> sensitivities,
                            const SamplingMask& mask, const NoiseModel& noise) {
  if (sensitivities.empty()) throw Error(ErrorKind::InvalidInput, "simulate_multi_coil needs at least one coil");
  check_mask_shape(mask, image.height(), image.width());
  std::vector<torch::Tensor> weighted;
  for (const auto& s : sensitivities) {
    if (s.height() != image.height() || s.width() != image.width()) {
      throw Error(ErrorKind::InvalidInput, "sensitivity shape does not match image shape");
    }
    weighted.push_back(s.data().to(image.data().scalar_type()) * image.data());
  }
  auto gen = make_generator(noise.seed);
  auto k = fft2c(torch::stack(weighted));
  auto m = mask.values.to(c10::toRealValueType(k.scalar_type()));
  auto y = measure(k, m, noise.relative_sigma, gen);
  CoilSet out;
  for (int64_t c = 0; c < y.size(0); ++c) out.coil_kspaces.emplace_back(y[c], Domain::KSpace);
  out.sensitivities = std::vector<ComplexGrid>(sensitivities.begin(), sensitivities.end());
  return out;
}

torch::Tensor rss(const torch::Tensor& coil_images, int64_t coil_dim) {
  return torch::linalg_vector_norm(coil_images, 2, std::vector<int64_t>{coil_dim}, false, c10::nullopt);
}

torch::Tensor rss_combine(std::span<const ComplexGrid> coil_images) {
  if (coil_images.empty()) throw Error(ErrorKind::InvalidInput, "rss_combine needs at least one coil image");
  std::vector<torch::Tensor> parts;
  for (const auto& g : coil_images) {
    if (g.height() != coil_images[0].height() || g.width() != coil_images[0].width()) {
      throw Error(ErrorKind::InvalidInput, "coil image shapes disagree");
    }
    parts.push_back(g.data());
  }
  return rss(torch::stack(parts), 0);
}

std::vector<ComplexGrid> synthesize_sensitivities(int64_t num_coils, int64_t height, int64_t width,
                                                  double smoothness) {
  if (num_coils < 1) throw Error(ErrorKind::InvalidInput, "num_coils must be at least 1");
  if (!(smoothness > 0)) throw Error(ErrorKind::InvalidInput, "smoothness must be positive");
  const double side = static_cast<double>(std::min(height, width));
  const double sigma = smoothness * side;
  const double radius = 0.5 * side;
  const double cy = static_cast<double>(height / 2);
  const double cx = static_cast<double>(width / 2);
  auto opts = torch::TensorOptions().dtype(torch::kFloat64);
  auto rows = torch::arange(height, opts).unsqueeze(1);
  auto cols = torch::arange(width, opts).unsqueeze(0);

  std::vector<torch::Tensor> mags;
  for (int64_t i = 0; i < num_coils; ++i) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(num_coils);
    const double py = num_coils == 1 ? cy : cy + radius * std::sin(angle);
    const double px = num_coils == 1 ? cx : cx + radius * std::cos(angle);
    auto d2 = (rows - py).square() + (cols - px).square();
    mags.push_back(torch::exp(-d2 / (2.0 * sigma * sigma)));
  }
  auto stacked = torch::stack(mags);
  auto norm = stacked.square().sum(0).sqrt().clamp_min(1e-300);
  stacked = stacked / norm;

  std::vector<ComplexGrid> maps;
  for (int64_t i = 0; i < num_coils; ++i) {
    const double phase = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(num_coils);
    auto re = stacked[i] * std::cos(phase);
    auto im = stacked[i] * std::sin(phase);
    maps.emplace_back(torch::complex(re, im).to(torch::kComplexFloat), Domain::Image);
  }
  return maps;
}

}  // namespace taskmri
