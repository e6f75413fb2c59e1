#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "taskmri/errors.hpp"
#include "taskmri/forward_model.hpp"
#include "taskmri/psf.hpp"
#include "taskmri/random.hpp"
#include "taskmri/sampler.hpp"

using namespace taskmri;
using cd = std::complex<double>;

namespace {

SamplingMask random_mask(int64_t h, int64_t w, torch::Generator& gen, double rate) {
  auto v = (torch::rand({h, w}, gen) < rate).to(torch::kFloat32);
  v[h / 2][w / 2] = 1.0;
  return {v, true};
}

// x~[i, j] = N^-1/2 sum_{u,v} p[(i - u + H/2) mod H, (j - v + W/2) mod W] x[u, v]
torch::Tensor circular_convolution(const torch::Tensor& psf, const torch::Tensor& image) {
  const auto h = image.size(0), w = image.size(1);
  auto p = psf.to(torch::kComplexDouble).contiguous();
  auto x = image.to(torch::kComplexDouble).contiguous();
  const auto* pp = reinterpret_cast<const cd*>(p.data_ptr<c10::complex<double>>());
  const auto* xp = reinterpret_cast<const cd*>(x.data_ptr<c10::complex<double>>());
  auto out = torch::zeros({h, w}, torch::kComplexDouble);
  auto* op = reinterpret_cast<cd*>(out.data_ptr<c10::complex<double>>());
  const double scale = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      cd acc = 0;
      for (int64_t u = 0; u < h; ++u)
        for (int64_t v = 0; v < w; ++v) {
          const auto r = ((i - u + h / 2) % h + h) % h;
          const auto c = ((j - v + w / 2) % w + w) % w;
          acc += pp[r * w + c] * xp[u * w + v];
        }
      op[i * w + j] = acc * scale;
    }
  return out;
}

SamplingMask centred_rows(int64_t h, int64_t w, int64_t rows, int64_t cols) {
  auto v = torch::zeros({h, w});
  v.slice(0, h / 2 - rows / 2, h / 2 - rows / 2 + rows).slice(1, w / 2 - cols / 2, w / 2 - cols / 2 + cols).fill_(1.0);
  return {v, true};
}

}  // namespace

TEST(Psf, ZeroFilledEqualsCircularConvolution) {
  auto gen = make_generator(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t h = trial % 2 ? 12 : 16, w = trial % 3 ? 16 : 10;
    auto mask = random_mask(h, w, gen, 0.35);
    auto x = torch::complex(torch::rand({h, w}, gen, torch::kFloat64), torch::rand({h, w}, gen, torch::kFloat64));
    auto zf = ifft2c(mask.values.to(torch::kFloat64) * fft2c(x));
    auto conv = circular_convolution(compute_psf(mask).data(), x);
    EXPECT_LT((zf - conv).abs().max().item<double>(), 1e-5) << "trial " << trial;
  }
}

TEST(Psf, FullMaskIsCentredImpulseAndEvenMaskIsReal) {
  auto psf = compute_psf(full_mask(16, 16)).data();
  EXPECT_NEAR(psf[8][8].abs().item<double>(), 16.0, 1e-9);
  auto rest = psf.abs().clone();
  rest[8][8] = 0;
  EXPECT_LT(rest.max().item<double>(), 1e-6);
  // symmetric about DC under k -> -k on the centred grid
  auto even = centred_rows(16, 16, 5, 7);
  EXPECT_LT(torch::imag(compute_psf(even).data()).abs().max().item<double>(), 1e-6);
  EXPECT_THROW(compute_psf({torch::zeros({8, 8}), true}), Error);
}

TEST(Fwhm, TriangleAndImpulse) {
  EXPECT_DOUBLE_EQ(fwhm({0.0, 0.5, 1.0, 0.5, 0.0}, 2), 2.0);
  EXPECT_DOUBLE_EQ(fwhm({0.0, 0.0, 1.0, 0.0, 0.0}, 2), 1.0);
  EXPECT_DOUBLE_EQ(mask_fwhm(full_mask(32, 32), Direction::Vertical), 1.0);
  EXPECT_EQ(fwhm({0.9, 1.0, 0.0}, 1), kUnboundedFwhm);
  EXPECT_DOUBLE_EQ(fwhm({0.0, 1.0, 4.0, 1.0, 0.0}, 2), fwhm({0.0, 0.25, 1.0, 0.25, 0.0}, 2));
}

TEST(Fwhm, LowPassHalfAxisMatchesDenseDft) {
  const int64_t n = 64, kept = 32;
  auto mask = centred_rows(n, n, kept, n);
  const double measured = mask_fwhm(mask, Direction::Vertical);
  // continuous magnitude of the inverse DFT of the kept lines, sampled densely
  auto profile = [&](double y) {
    cd acc = 0;
    for (int64_t k = n / 2 - kept / 2; k < n / 2 + kept / 2; ++k)
      acc += std::exp(cd(0, 2.0 * std::numbers::pi * static_cast<double>(k - n / 2) * y / static_cast<double>(n)));
    return std::abs(acc);
  };
  const double half = 0.5 * profile(0.0);
  double y = 0.0;
  while (profile(y + 1e-4) > half) y += 1e-4;
  const double dense = 2.0 * y;
  EXPECT_NEAR(measured, dense, 0.1);
}

TEST(Psf, CompareMasksSignAndIdentity) {
  auto iso = make_lowpass_mask(64, 64, 512);
  auto vertical = centred_rows(64, 64, 64, 8);
  EXPECT_EQ(compare_masks(iso, iso, Direction::Vertical), 0.0);
  const double gain = compare_masks(iso, vertical, Direction::Vertical);
  EXPECT_GT(gain, 0.0);
  const double back = compare_masks(vertical, iso, Direction::Vertical);
  const double f1 = mask_fwhm(iso, Direction::Vertical), f2 = mask_fwhm(vertical, Direction::Vertical);
  EXPECT_NEAR(back, -gain * f1 / f2, 1e-12);
}

TEST(Psf, NestedLowPassNeverWidens) {
  double prev = kUnboundedFwhm;
  for (int64_t side = 2; side <= 64; side += 2) {
    auto m = centred_rows(64, 64, side, side);
    for (auto dir : {Direction::Vertical, Direction::Horizontal}) {
      const double f = mask_fwhm(m, dir);
      if (dir == Direction::Vertical) {
        EXPECT_LE(f, prev + 1e-12) << "side " << side;
        prev = f;
      }
    }
  }
}

TEST(Psf, MaskScalingLeavesFwhmUnchanged) {
  auto gen = make_generator(2);
  auto m = random_mask(32, 32, gen, 0.3);
  SamplingMask scaled{m.values * 3.0, false};
  EXPECT_NEAR(mask_fwhm(m, Direction::Vertical), mask_fwhm(scaled, Direction::Vertical), 1e-9);
  EXPECT_NEAR(mask_fwhm(m, Direction::Horizontal), mask_fwhm(scaled, Direction::Horizontal), 1e-9);
}

TEST(Psf, VerticalBandFraction) {
  auto acs = AcsRegion{2, 2}.indicator(16, 16);
  auto m = centred_rows(16, 16, 16, 4);
  EXPECT_DOUBLE_EQ(vertical_band_fraction(m, acs, 4), 1.0);
  EXPECT_DOUBLE_EQ(vertical_band_fraction(m, acs, 2), (32.0 - 4.0) / (64.0 - 4.0));
  EXPECT_EQ(parse_direction("horizontal"), Direction::Horizontal);
  EXPECT_THROW(parse_direction("diagonal"), Error);
}
