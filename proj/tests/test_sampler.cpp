#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "taskmri/errors.hpp"
#include "taskmri/random.hpp"
#include "taskmri/sampler.hpp"

using namespace taskmri;

namespace {

torch::Tensor vec(std::initializer_list<double> v) { return torch::tensor(std::vector<double>(v), torch::kFloat64); }

std::vector<std::pair<int64_t, int64_t>> ones_of(const torch::Tensor& m) {
  std::vector<std::pair<int64_t, int64_t>> out;
  auto a = m.to(torch::kFloat32).contiguous();
  for (int64_t r = 0; r < a.size(0); ++r) {
    for (int64_t c = 0; c < a.size(1); ++c) {
      if (a[r][c].item<float>() > 0.5F) out.emplace_back(r, c);
    }
  }
  return out;
}

}  // namespace

TEST(RescaleProbs, WorkedBranches) {
  auto down = rescale_probs(vec({0.2, 0.4, 0.6, 0.8}), 1.0);
  auto up = rescale_probs(vec({0.2, 0.4, 0.6, 0.8}), 3.0);
  const double want_down[] = {0.1, 0.2, 0.3, 0.4};
  const double want_up[] = {0.6, 0.7, 0.8, 0.9};
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(down[i].item<double>(), want_down[i], 1e-12);
    EXPECT_NEAR(up[i].item<double>(), want_up[i], 1e-12);
  }
  auto same = rescale_probs(vec({0.2, 0.4, 0.6, 0.8}), 2.0);
  EXPECT_LT((same - vec({0.2, 0.4, 0.6, 0.8})).abs().max().item<double>(), 1e-15);
}

TEST(RescaleProbs, RangeAndBudgetOnRandomInputs) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const int64_t n = std::uniform_int_distribution<int64_t>(1, 300)(rng);
    const double b = std::uniform_real_distribution<double>(0.0, static_cast<double>(n))(rng);
    auto g = make_generator(static_cast<uint64_t>(trial));
    auto pt = torch::rand({n}, g, torch::kFloat64).clamp(1e-6, 1.0 - 1e-6);
    auto p = rescale_probs(pt, b);
    EXPECT_GE(p.min().item<double>(), 0.0);
    EXPECT_LE(p.max().item<double>(), 1.0);
    EXPECT_LE(std::abs(p.sum().item<double>() - b), 1e-6 * static_cast<double>(n));
  }
  EXPECT_THROW(rescale_probs(vec({0.5, 0.5}), 3.0), Error);
}

TEST(Acs, SizingExamples) {
  auto a = AcsRegion::for_budget(8192);
  EXPECT_EQ(a.height, 32);
  EXPECT_EQ(a.width, 32);
  auto b = AcsRegion::for_budget(1024);  // 64x64 at R=4: 128 -> 11 -> 10
  EXPECT_EQ(b.height, 10);
  EXPECT_EQ(b.size(), 100);
  auto ind = a.indicator(256, 256);
  EXPECT_EQ(ind.sum().item<int64_t>(), 1024);
  EXPECT_TRUE(ind[128][128].item<bool>());
  EXPECT_TRUE(ind[112][112].item<bool>());
  EXPECT_FALSE(ind[111][112].item<bool>());
  EXPECT_TRUE(AcsRegion::for_budget(7).empty());
}

TEST(Sampler, EvalMaskBudgetAcsAndTieBreak) {
  Sampler s(16, 16, 64, 1);
  auto m = s->binarize_eval_mask().values;
  EXPECT_EQ(m.sum().item<double>(), 64.0);
  EXPECT_TRUE(torch::all(m.masked_select(s->acs_indicator()) == 1).item<bool>());
  {
    torch::NoGradGuard g;
    s->logits().fill_(0.3);
  }
  auto uniform = s->binarize_eval_mask().values.flatten();
  auto acs = s->acs_indicator().flatten();
  int64_t taken = 0;
  for (int64_t i = 0; i < 256; ++i) {
    if (acs[i].item<bool>()) continue;
    const bool expect = taken < 64 - s->acs().size();
    EXPECT_EQ(uniform[i].item<float>() == 1.0F, expect) << i;
    if (expect) ++taken;
  }
}

TEST(Sampler, IncreasingLogitsPickLargestIndices) {
  Sampler s(4, 4, 4, 0, AcsRegion{});
  {
    torch::NoGradGuard g;
    s->logits().copy_(torch::arange(16, torch::kFloat32).view({4, 4}));
  }
  auto m = s->binarize_eval_mask().values.flatten();
  for (int64_t i = 0; i < 16; ++i) EXPECT_EQ(m[i].item<float>(), i >= 12 ? 1.0F : 0.0F);
}

TEST(Sampler, BinarisationInvariantUnderMonotoneMaps) {
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t h = 4 + trial % 5, w = 8;
    const int64_t b = 1 + trial % (h * w - 1);
    Sampler s(h, w, b, static_cast<uint64_t>(trial));
    auto base = s->binarize_eval_mask().values;
    auto q0 = s->logits().detach().clone();
    for (int k = 0; k < 3; ++k) {
      {
        torch::NoGradGuard g;
        if (k == 0) s->logits().copy_(q0 + 2.5);
        if (k == 1) s->logits().copy_(q0 * 3.0);
        if (k == 2) s->logits().copy_(torch::tanh(q0) * 0.5 + q0.pow(3));
      }
      EXPECT_TRUE(torch::equal(s->binarize_eval_mask().values, base)) << trial << ":" << k;
    }
  }
}

TEST(Sampler, TrainingDrawsWithinToleranceAndContainAcs) {
  Sampler s(32, 32, 256, 5);
  auto gen = make_generator(3);
  const auto tol = budget_tolerance(256);
  double total = 0.0;
  const int draws = 1000;
  for (int i = 0; i < draws; ++i) {
    auto m = s->draw_training_mask(gen).values;
    const double count = m.sum().item<double>();
    total += count;
    EXPECT_LE(std::abs(count - 256.0), static_cast<double>(tol));
    EXPECT_TRUE(torch::all(m.masked_select(s->acs_indicator()) == 1).item<bool>());
  }
  EXPECT_LE(std::abs(total / draws - 256.0), 2.0 * static_cast<double>(tol));
}

TEST(Sampler, DegenerateBudgetReturnsAcsExactly) {
  const auto acs = AcsRegion::for_budget(128);
  Sampler s(16, 16, acs.size(), 2, acs);
  {
    torch::NoGradGuard g;
    s->logits().fill_(-30.0);
  }
  auto m = s->draw_training_mask(uint64_t{4}).values;
  EXPECT_TRUE(torch::equal(m.to(torch::kBool), s->acs_indicator()));
}

TEST(StraightThrough, GradientEqualsRelaxedSurrogate) {
  Sampler s(16, 16, 64, 9);
  auto gen = make_generator(1);
  auto w = torch::randn({16, 16}, gen);
  auto seed_gen = make_generator(2);
  auto m = s->relaxed_training_mask(seed_gen);
  (m * w).sum().backward();
  auto grad_ste = s->logits().grad().clone();
  s->logits().mutable_grad().zero_();
  (s->probabilities() * w).sum().backward();
  EXPECT_TRUE(torch::allclose(grad_ste, s->logits().grad(), 0.0, 0.0));
  // repeated backward on the same frozen draw is bitwise stable
  s->logits().mutable_grad().zero_();
  auto g2 = make_generator(2);
  (s->relaxed_training_mask(g2) * w).sum().backward();
  EXPECT_TRUE(torch::equal(grad_ste, s->logits().grad()));
  // zero upstream gradient stays zero
  s->logits().mutable_grad().zero_();
  auto g3 = make_generator(2);
  (s->relaxed_training_mask(g3) * torch::zeros({16, 16})).sum().backward();
  EXPECT_EQ(s->logits().grad().abs().max().item<float>(), 0.0F);
  EXPECT_TRUE(torch::equal(ste_backward(w), w));
}

TEST(StraightThrough, SurrogateGradientMatchesFiniteDifferences) {
  // double precision copy of the surrogate p(q) on a 16x16 grid
  const auto acs = AcsRegion::for_budget(64);
  auto acs_ind = acs.indicator(16, 16);
  auto gen = make_generator(4);
  auto q = (torch::randn({16, 16}, gen, torch::kFloat64) * 0.5 - 1.0).requires_grad_(true);
  auto w = torch::randn({16, 16}, gen, torch::kFloat64);
  auto surrogate = [&](const torch::Tensor& qq) {
    auto free = torch::sigmoid(qq).masked_select(acs_ind.logical_not());
    auto p = torch::ones({16, 16}, torch::kFloat64).masked_scatter(acs_ind.logical_not(),
                                                                   rescale_probs(free, 64.0 - acs.size()));
    return (p * w).sum();
  };
  surrogate(q).backward();
  auto analytic = q.grad().clone();
  const double h = 1e-6;
  std::mt19937_64 rng(5);
  for (int k = 0; k < 20; ++k) {
    const auto idx = std::uniform_int_distribution<int64_t>(0, 255)(rng);
    auto qp = q.detach().clone();
    auto qm = q.detach().clone();
    qp.view(-1)[idx] += h;
    qm.view(-1)[idx] -= h;
    const double fd = (surrogate(qp).item<double>() - surrogate(qm).item<double>()) / (2.0 * h);
    const double an = analytic.view(-1)[idx].item<double>();
    EXPECT_LE(std::abs(fd - an), 1e-3 * std::max(1e-8, std::abs(an)) + 1e-9) << idx;
  }
}

TEST(PoissonDisc, CountRadiusAndAcs) {
  const auto acs = AcsRegion::for_budget(1024);
  auto res = make_poisson_disc_mask_with_radius(64, 64, 1024, acs, 17);
  auto m = res.mask.values;
  EXPECT_LE(std::abs(m.sum().item<double>() - 1024.0), static_cast<double>(budget_tolerance(1024)));
  auto ind = acs.indicator(64, 64);
  EXPECT_TRUE(torch::all(m.masked_select(ind) == 1).item<bool>());
  std::vector<std::pair<int64_t, int64_t>> pts;
  for (auto [r, c] : ones_of(m)) {
    if (!ind[r][c].item<bool>()) pts.emplace_back(r, c);
  }
  for (size_t i = 0; i < pts.size(); ++i) {
    const double ri = poisson_disc_radius(res.r0, pts[i].first, pts[i].second, 64, 64);
    for (size_t j = i + 1; j < pts.size(); ++j) {
      const double rj = poisson_disc_radius(res.r0, pts[j].first, pts[j].second, 64, 64);
      const double d = std::hypot(static_cast<double>(pts[i].first - pts[j].first),
                                  static_cast<double>(pts[i].second - pts[j].second));
      ASSERT_GE(d, std::max(ri, rj) - 1e-12) << i << "," << j;
    }
  }
  auto again = make_poisson_disc_mask(64, 64, 1024, acs, 17).values;
  EXPECT_TRUE(torch::equal(again, m));
  EXPECT_EQ(make_poisson_disc_mask(8, 8, 64, AcsRegion::for_budget(64), 1).values.sum().item<double>(), 64.0);
}

TEST(LowPass, MatchesBruteForceSort) {
  auto m = make_lowpass_mask(8, 8, 16).values;
  std::vector<std::tuple<int64_t, int64_t>> order;
  for (int64_t i = 0; i < 64; ++i) order.emplace_back(((i / 8) - 4) * ((i / 8) - 4) + ((i % 8) - 4) * ((i % 8) - 4), i);
  std::sort(order.begin(), order.end());
  auto ref = torch::zeros({64});
  for (int k = 0; k < 16; ++k) ref[std::get<1>(order[static_cast<size_t>(k)])] = 1.0;
  EXPECT_TRUE(torch::equal(m.flatten(), ref));
  auto dc = make_lowpass_mask(8, 8, 1).values;
  EXPECT_EQ(dc.sum().item<double>(), 1.0);
  EXPECT_EQ(dc[4][4].item<double>(), 1.0);
  EXPECT_EQ(make_lowpass_mask(8, 8, 64).values.sum().item<double>(), 64.0);
}
