#include "taskmri/psf.hpp"

#include <cmath>

#include "taskmri/errors.hpp"

namespace taskmri {

Direction parse_direction(const std::string& name) {
  if (name == "vertical") return Direction::Vertical;
  if (name == "horizontal") return Direction::Horizontal;
  throw Error(ErrorKind::InvalidInput, "unknown direction '" + name + "'");
}

std::string to_string(Direction direction) {
  return direction == Direction::Vertical ? "vertical" : "horizontal";
}

ComplexGrid compute_psf(const SamplingMask& mask) {
  if (mask.values.abs().sum().item<double>() == 0.0) {
    throw Error(ErrorKind::InvalidInput, "PSF of an all-zero mask is undefined");
  }
  auto m = mask.values.to(torch::kFloat64).to(torch::kComplexDouble);
  return ComplexGrid(ifft2c(m), Domain::Image);
}

PsfProfile extract_profile(const ComplexGrid& psf, Direction direction) {
  auto mag = psf.data().abs().to(torch::kFloat64).contiguous();
  const auto h = mag.size(0);
  const auto w = mag.size(1);
  const double* v = mag.data_ptr<double>();
  const double peak = mag.max().item<double>();
  int64_t best = -1;
  int64_t best_d2 = 0;
  for (int64_t i = 0; i < h * w; ++i) {
    if (v[i] != peak) continue;
    const auto dy = i / w - h / 2;
    const auto dx = i % w - w / 2;
    const auto d2 = dy * dy + dx * dx;
    if (best < 0 || d2 < best_d2) {
      best = i;
      best_d2 = d2;
    }
  }
  const auto pr = best / w;
  const auto pc = best % w;
  PsfProfile profile;
  profile.direction = direction;
  const auto len = direction == Direction::Vertical ? h : w;
  const auto pos = direction == Direction::Vertical ? pr : pc;
  profile.samples.resize(static_cast<size_t>(len));
  const auto shift = len / 2 - pos;
  for (int64_t i = 0; i < len; ++i) {
    const auto src = ((i - shift) % len + len) % len;
    profile.samples[static_cast<size_t>(i)] = direction == Direction::Vertical ? v[src * w + pc] : v[pr * w + src];
  }
  profile.peak_index = static_cast<size_t>(len / 2);
  return profile;
}

double fwhm(const std::vector<double>& samples, size_t peak_index) {
  if (samples.empty() || peak_index >= samples.size()) throw Error(ErrorKind::InvalidInput, "empty profile");
  const double half = 0.5 * samples[peak_index];
  if (!(half > 0)) throw Error(ErrorKind::InvalidInput, "profile peak must be positive");

  // left: first i below the peak with samples[i] <= half, crossing between i and i+1
  double left = 0.0;
  bool found_left = false;
  for (size_t i = peak_index; i-- > 0;) {
    if (samples[i] <= half) {
      const double a = samples[i];
      const double b = samples[i + 1];
      left = static_cast<double>(i) + (half - a) / (b - a);
      found_left = true;
      break;
    }
  }
  double right = 0.0;
  bool found_right = false;
  for (size_t i = peak_index + 1; i < samples.size(); ++i) {
    if (samples[i] <= half) {
      const double a = samples[i - 1];
      const double b = samples[i];
      right = static_cast<double>(i - 1) + (a - half) / (a - b);
      found_right = true;
      break;
    }
  }
  if (!found_left || !found_right) return kUnboundedFwhm;
  return right - left;
}

double fwhm(const PsfProfile& profile) { return fwhm(profile.samples, profile.peak_index); }

double mask_fwhm(const SamplingMask& mask, Direction direction) {
  return fwhm(extract_profile(compute_psf(mask), direction));
}

double compare_masks(const SamplingMask& m1, const SamplingMask& m2, Direction direction) {
  if (m1.values.sizes() != m2.values.sizes()) throw Error(ErrorKind::InvalidInput, "masks differ in shape");
  const double f1 = mask_fwhm(m1, direction);
  const double f2 = mask_fwhm(m2, direction);
  if (!std::isfinite(f1) || !std::isfinite(f2)) return std::numeric_limits<double>::quiet_NaN();
  return (f1 - f2) / f1;
}

double vertical_band_fraction(const SamplingMask& mask, const torch::Tensor& acs_indicator, int64_t band_width) {
  using torch::indexing::Slice;
  const auto w = mask.width();
  auto free = mask.values.to(torch::kFloat64) * acs_indicator.logical_not().to(torch::kFloat64);
  const double total = free.sum().item<double>();
  if (total == 0.0) return 0.0;
  const auto lo = w / 2 - band_width / 2;
  const auto hi = lo + band_width;
  return free.index({Slice(), Slice(std::max<int64_t>(lo, 0), std::min(hi, w))}).sum().item<double>() / total;
}

}  // namespace taskmri
