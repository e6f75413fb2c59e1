#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "taskmri/datasets.hpp"
#include "taskmri/errors.hpp"
#include "taskmri/forward_model.hpp"
#include "taskmri/random.hpp"
#include "taskmri/retriever.hpp"

using namespace taskmri;
using cd = std::complex<double>;

namespace {

// Centered unitary DFT by direct summation: the reference for fft2c.
std::vector<cd> direct_dft(const std::vector<cd>& x, int64_t h, int64_t w, bool inverse) {
  std::vector<cd> out(static_cast<size_t>(h * w));
  const double sign = inverse ? 1.0 : -1.0;
  for (int64_t ku = 0; ku < h; ++ku) {
    for (int64_t kv = 0; kv < w; ++kv) {
      cd acc = 0.0;
      for (int64_t r = 0; r < h; ++r) {
        for (int64_t c = 0; c < w; ++c) {
          const double phase = sign * 2.0 * std::numbers::pi *
                               (static_cast<double>((ku - h / 2) * (r - h / 2)) / static_cast<double>(h) +
                                static_cast<double>((kv - w / 2) * (c - w / 2)) / static_cast<double>(w));
          acc += x[static_cast<size_t>(r * w + c)] * std::polar(1.0, phase);
        }
      }
      out[static_cast<size_t>(ku * w + kv)] = acc / std::sqrt(static_cast<double>(h * w));
    }
  }
  return out;
}

std::vector<cd> to_vec(const torch::Tensor& t) {
  auto d = t.to(torch::kComplexDouble).contiguous();
  auto* p = reinterpret_cast<const cd*>(d.data_ptr<c10::complex<double>>());
  return {p, p + d.numel()};
}

torch::Tensor random_complex(std::vector<int64_t> shape, uint64_t seed) {
  auto g = make_generator(seed);
  return torch::complex(torch::randn(shape, g, torch::kFloat64), torch::randn(shape, g, torch::kFloat64));
}

}  // namespace

TEST(Fft2c, MatchesDirectDftOnOddAndEvenGrids) {
  for (auto [h, w] : {std::pair<int64_t, int64_t>{8, 8}, {6, 9}, {7, 5}}) {
    auto x = random_complex({h, w}, 11 + static_cast<uint64_t>(h * w));
    auto fast = to_vec(fft2c(x));
    auto slow = direct_dft(to_vec(x), h, w, false);
    auto back = to_vec(ifft2c(x));
    auto slow_back = direct_dft(to_vec(x), h, w, true);
    for (size_t i = 0; i < fast.size(); ++i) {
      EXPECT_NEAR(std::abs(fast[i] - slow[i]), 0.0, 1e-10);
      EXPECT_NEAR(std::abs(back[i] - slow_back[i]), 0.0, 1e-10);
    }
  }
}

TEST(Fft2c, ConstantImageMapsToCenteredDc) {
  const double c = 0.75;
  auto k = fft2c(ComplexGrid(torch::full({8, 12}, c, torch::kFloat64), Domain::Image));
  auto mag = k.data().abs();
  EXPECT_NEAR(mag[4][6].item<double>(), c * std::sqrt(96.0), 1e-12);
  mag[4][6] = 0.0;
  EXPECT_LT(mag.max().item<double>(), 1e-12);
}

TEST(Fft2c, HorizontalCosineGivesConjugatePeaks) {
  const int64_t n = 8, f = 2;
  auto cols = torch::arange(n, torch::kFloat64);
  auto img = torch::cos(2.0 * std::numbers::pi * f * cols / n).unsqueeze(0).expand({n, n}).contiguous();
  auto mag = fft2c(img).abs();
  EXPECT_NEAR(mag[n / 2][n / 2 + f].item<double>(), 4.0, 1e-12);
  EXPECT_NEAR(mag[n / 2][n / 2 - f].item<double>(), 4.0, 1e-12);
  EXPECT_NEAR(mag.sum().item<double>(), 8.0, 1e-10);
}

TEST(Fft2c, UnitaryAdjointAndRoundTrip) {
  for (int64_t n : {8, 16, 64, 128}) {
    auto x = random_complex({n, n}, static_cast<uint64_t>(n)).to(torch::kComplexFloat);
    auto y = random_complex({n, n}, static_cast<uint64_t>(n + 1)).to(torch::kComplexFloat);
    auto fx = fft2c(x);
    const double nx = torch::linalg_vector_norm(x, 2, c10::nullopt, false, c10::nullopt).item<double>();
    const double nfx = torch::linalg_vector_norm(fx, 2, c10::nullopt, false, c10::nullopt).item<double>();
    EXPECT_NEAR(nfx / nx, 1.0, 1e-5);
    EXPECT_LT((ifft2c(fx) - x).abs().max().item<double>(), 1e-5);
    auto lhs = (fx * torch::conj(y)).sum();
    auto rhs = (x * torch::conj(ifft2c(y))).sum();
    EXPECT_LT((lhs - rhs).abs().item<double>() / lhs.abs().item<double>(), 1e-5);
  }
}

TEST(ComplexGrid, RejectsNonFiniteAndWrongDomain) {
  auto bad = torch::zeros({4, 4}, torch::kFloat32);
  bad[1][2] = std::nan("");
  EXPECT_THROW(ComplexGrid(bad, Domain::Image), Error);
  ComplexGrid k(torch::zeros({4, 4}), Domain::KSpace);
  EXPECT_THROW(fft2c(k), Error);
  auto planes = torch::randn({2, 3, 5});
  auto g = ComplexGrid::from_planes(planes, Domain::Image);
  EXPECT_TRUE(torch::equal(g.planes(), planes));
}

TEST(Measurement, MaskingAndNoiselessCases) {
  auto x = ComplexGrid(torch::rand({16, 16}, torch::kFloat64), Domain::Image);
  auto full = simulate_single_coil(x, full_mask(16, 16), {0.0, 1});
  EXPECT_TRUE(torch::equal(full.data(), fft2c(x).data()));
  auto zero = simulate_single_coil(x, {torch::zeros({16, 16}), true}, {5e-4, 1});
  EXPECT_EQ(zero.data().abs().max().item<double>(), 0.0);
  auto half = torch::zeros({16, 16});
  half.slice(0, 0, 8).fill_(1.0);
  auto y = simulate_single_coil(x, {half, true}, {0.0, 3});
  auto ref = fft2c(x).data();
  EXPECT_TRUE(torch::equal(y.data().slice(0, 0, 8), ref.slice(0, 0, 8).to(y.data().dtype())));
  EXPECT_EQ(y.data().slice(0, 8).abs().max().item<double>(), 0.0);
  auto k = fft2c(x.data());
  auto m = half.to(torch::kFloat64);
  EXPECT_TRUE(torch::equal(m * (m * k), m * k));
}

TEST(Measurement, NoiseStdMatchesTargetOverManyDraws) {
  // image with |DC| = 8: constant 1 on 8x8
  auto k = fft2c(torch::ones({8, 8}, torch::kFloat64).to(torch::kComplexDouble));
  const double sigma = 0.05;
  auto gen = make_generator(99);
  auto batch = k.unsqueeze(0).expand({10000 / 64 + 1, 8, 8}).contiguous();
  auto y = measure(batch, torch::ones({8, 8}, torch::kFloat64), sigma, gen);
  auto noise = y - batch;
  const double target = sigma * 8.0;
  const double sr = torch::real(noise).std().item<double>();
  const double si = torch::imag(noise).std().item<double>();
  EXPECT_NEAR(sr / target, 1.0, 0.05);
  EXPECT_NEAR(si / target, 1.0, 0.05);
  EXPECT_NEAR(torch::real(noise).mean().item<double>(), 0.0, 3.0 * target / std::sqrt(10000.0));
}

TEST(Measurement, MultiCoilMatchesPerCoilRoundTrip) {
  auto x = ComplexGrid(torch::rand({16, 16}, torch::kFloat64), Domain::Image);
  auto sens = synthesize_sensitivities(2, 16, 16, 0.35);
  auto coils = simulate_multi_coil(x, sens, full_mask(16, 16), {0.0, 0});
  ASSERT_EQ(coils.num_coils(), 2);
  for (int i = 0; i < 2; ++i) {
    auto back = ifft2c(coils.coil_kspaces[static_cast<size_t>(i)]).data();
    auto ref = sens[static_cast<size_t>(i)].data().to(torch::kComplexDouble) * x.data();
    EXPECT_LT((back - ref).abs().max().item<double>(), 1e-5);
  }
  std::vector<ComplexGrid> one{ComplexGrid(torch::ones({16, 16}), Domain::Image)};
  auto single = simulate_multi_coil(x, one, full_mask(16, 16), {1e-3, 5});
  auto ref = simulate_single_coil(x, full_mask(16, 16), {1e-3, 5});
  EXPECT_LT((single.coil_kspaces[0].data() - ref.data()).abs().max().item<double>(), 1e-6);
  EXPECT_THROW(simulate_multi_coil(x, std::span<const ComplexGrid>{}, full_mask(16, 16), {0.0, 0}), Error);
}

TEST(Rss, MatchesScalarLoopAndSymmetry) {
  auto z = random_complex({4, 6, 5}, 4);
  auto out = rss(z, 0);
  auto zv = to_vec(z);
  for (int64_t p = 0; p < 30; ++p) {
    double acc = 0.0;
    for (int64_t c = 0; c < 4; ++c) acc += std::norm(zv[static_cast<size_t>(c * 30 + p)]);
    EXPECT_NEAR(out.flatten()[p].item<double>(), std::sqrt(acc), 1e-6);
  }
  auto a = random_complex({1, 3, 3}, 8);
  EXPECT_LT((rss(torch::cat({a, a}), 0) - a[0].abs() * std::sqrt(2.0)).abs().max().item<double>(), 1e-12);
  std::vector<ComplexGrid> one{ComplexGrid(a[0], Domain::Image)};
  EXPECT_LT((rss_combine(one) - a[0].abs()).abs().max().item<double>(), 1e-6);
}

TEST(Sensitivities, NormalisedAndSmootherWithWiderBumps) {
  auto one = synthesize_sensitivities(1, 8, 8, 0.3);
  EXPECT_LT((one[0].data().abs() - 1.0).abs().max().item<double>(), 1e-6);
  double previous_tv = std::numeric_limits<double>::infinity();
  for (double s : {0.15, 0.3, 0.6}) {
    auto maps = synthesize_sensitivities(4, 32, 32, s);
    std::vector<torch::Tensor> data;
    for (auto& m : maps) data.push_back(m.data());
    auto stacked = torch::stack(data);
    EXPECT_LT((rss(stacked, 0) - 1.0).abs().max().item<double>(), 1e-6);
    auto mag = stacked.abs();
    const double tv = (mag.diff(1, 1).abs().sum() + mag.diff(1, 2).abs().sum()).item<double>();
    EXPECT_LT(tv, previous_tv);
    previous_tv = tv;
  }
}

TEST(Datasets, FullySampledPipelineReproducesTarget) {
  AnisotropicOptions opts;
  opts.num_coils = 4;
  auto ds = make_anisotropic_phantoms(4, 32, 32, 3, opts);
  for (const auto& s : ds.samples) {
    auto y = s.kspace.unsqueeze(0);
    auto recon = zero_filled(y)[0];
    EXPECT_LT((recon - s.target).abs().max().item<double>(), 1e-4);
  }
}
