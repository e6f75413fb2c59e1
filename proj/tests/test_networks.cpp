#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "taskmri/datasets.hpp"
#include "taskmri/errors.hpp"
#include "taskmri/forward_model.hpp"
#include "taskmri/metrics.hpp"
#include "taskmri/predictors.hpp"
#include "taskmri/random.hpp"
#include "taskmri/retriever.hpp"

using namespace taskmri;

namespace {

RetrieverConfig small_config(int64_t cascades = 2) {
  RetrieverConfig c;
  c.num_cascades = cascades;
  c.base_channels = 4;
  c.pool_levels = 2;
  c.sens_base_channels = 4;
  c.sens_pool_levels = 2;
  return c;
}

torch::Tensor phantom_kspace(int64_t n, uint64_t seed, int64_t coils = 1) {
  AnisotropicOptions o;
  o.num_coils = coils;
  auto ds = make_anisotropic_phantoms(1, n, n, seed, o);
  return ds.samples[0].kspace.unsqueeze(0);
}

// Central finite differences on a scalar function of one tensor entry.
double finite_difference(const std::function<double()>& f, torch::Tensor t, int64_t flat_index, double h) {
  torch::NoGradGuard g;
  auto view = t.view(-1);
  const double orig = view[flat_index].item<double>();
  view[flat_index] = orig + h;
  const double fp = f();
  view[flat_index] = orig - h;
  const double fm = f();
  view[flat_index] = orig;
  return (fp - fm) / (2.0 * h);
}

void expect_gradients_match(torch::nn::Module& module, const std::function<torch::Tensor()>& loss, int picks,
                            uint64_t seed) {
  auto params = module.parameters();
  module.zero_grad();
  loss().backward();
  std::mt19937_64 rng(seed);
  int checked = 0;
  for (int k = 0; k < picks; ++k) {
    auto& p = params[std::uniform_int_distribution<size_t>(0, params.size() - 1)(rng)];
    const auto idx = std::uniform_int_distribution<int64_t>(0, p.numel() - 1)(rng);
    const double analytic = p.grad().view(-1)[idx].item<double>();
    const double numeric = finite_difference([&] { return loss().item<double>(); }, p, idx, 1e-6);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    EXPECT_LE(std::abs(analytic - numeric) / scale, 1e-3) << "param entry " << idx;
    ++checked;
  }
  EXPECT_EQ(checked, picks);
}

}  // namespace

TEST(CascadeUpdate, FixedPointsOfTheUpdateRule) {
  auto gen = make_generator(1);
  auto k = torch::complex(torch::randn({1, 1, 8, 8}, gen), torch::randn({1, 1, 8, 8}, gen));
  auto y = torch::complex(torch::randn({1, 1, 8, 8}, gen), torch::randn({1, 1, 8, 8}, gen));
  auto zero = torch::zeros_like(k);
  auto one = torch::ones({1});
  EXPECT_TRUE(torch::equal(cascade_update(y, y, torch::ones({8, 8}), one, zero), y));
  EXPECT_TRUE(torch::equal(cascade_update(k, y, torch::ones({8, 8}), torch::zeros({1}), zero), k));
  EXPECT_TRUE(torch::equal(cascade_update(k, y, torch::zeros({8, 8}), torch::full({1}, 0.7), zero), k));
  // from an arbitrary start the step lands on y up to one rounding of k - (k - y)
  EXPECT_LT((cascade_update(k, y, torch::ones({8, 8}), one, zero) - y).abs().max().item<double>(), 1e-6);
}

TEST(Retriever, FullMaskWithoutRefinementReturnsMagnitude) {
  Retriever r(small_config(3), false);
  r->set_refinement_enabled(false);
  auto y = phantom_kspace(32, 4);
  auto x = ifft2c(y).abs()[0][0];
  auto out = r->forward(y, torch::ones({32, 32}), AcsRegion::for_budget(1024))[0];
  EXPECT_LT((out - x).abs().max().item<double>(), 1e-4);
}

TEST(Retriever, DataConsistencyContractsWithoutRefinement) {
  auto gen = make_generator(2);
  auto y_full = phantom_kspace(16, 5);
  auto m = (torch::rand({16, 16}, gen) < 0.4).to(torch::kFloat32);
  auto y = y_full * m;
  auto k = torch::complex(torch::randn({1, 1, 16, 16}, gen), torch::randn({1, 1, 16, 16}, gen));
  double prev = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 6; ++t) {
    k = cascade_update(k, y, m, torch::full({1}, 0.6), torch::zeros_like(k));
    const double r = (m * (k - y)).abs().square().sum().sqrt().item<double>();
    EXPECT_LE(r, prev + 1e-7);
    prev = r;
  }
}

TEST(Retriever, OutputShapeNonnegativeAndDeterministic) {
  torch::manual_seed(3);
  Retriever r(small_config(), false);
  r->eval();
  auto y = phantom_kspace(32, 6);
  auto m = (torch::rand({32, 32}, make_generator(1)) < 0.3).to(torch::kFloat32);
  auto a = r->forward(y * m, m, AcsRegion::for_budget(256));
  auto b = r->forward(y * m, m, AcsRegion::for_budget(256));
  EXPECT_EQ(a.sizes(), (std::vector<int64_t>{1, 32, 32}));
  EXPECT_GE(a.min().item<float>(), 0.0F);
  EXPECT_TRUE(torch::equal(a, b));
}

TEST(Retriever, NonFiniteKspaceReportsCascadeIndex) {
  Retriever r(small_config(3), false);
  {
    torch::NoGradGuard g;
    r->cascade(1)->eta().fill_(std::numeric_limits<float>::quiet_NaN());
  }
  auto y = phantom_kspace(16, 7);
  try {
    r->forward(y, torch::ones({16, 16}), AcsRegion::for_budget(64));
    FAIL() << "expected NumericalFailure";
  } catch (const NumericalFailure& e) {
    EXPECT_EQ(e.cascade_index(), 1);
    EXPECT_EQ(e.kind(), ErrorKind::NumericalFailure);
  }
}

TEST(Retriever, CoilPermutationLeavesOutputUnchanged) {
  torch::manual_seed(4);
  Retriever r(small_config(), true);
  r->eval();
  auto y = phantom_kspace(32, 8, 4);
  auto m = AcsRegion::for_budget(256).indicator(32, 32).to(torch::kFloat32);
  m.slice(0, 0, 32, 3).fill_(1.0);
  auto a = r->forward(y * m, m, AcsRegion::for_budget(256));
  auto perm = torch::tensor({2, 0, 3, 1});
  auto b = r->forward((y * m).index_select(1, perm), m, AcsRegion::for_budget(256));
  EXPECT_LT((a - b).abs().max().item<double>(), 1e-5);
}

TEST(Retriever, GradientsMatchFiniteDifferences) {
  torch::manual_seed(5);
  Retriever r(small_config(2), false);
  r->to(torch::kFloat64);
  auto y = phantom_kspace(16, 9).to(torch::kComplexDouble);
  auto m = (torch::rand({16, 16}, make_generator(3), torch::kFloat64) < 0.5).to(torch::kFloat64);
  auto target = ifft2c(y).abs().select(1, 0);
  auto loss = [&] { return (r->forward(y * m, m, AcsRegion::for_budget(64)) - target).square().mean(); };
  expect_gradients_match(*r, loss, 12, 1);
  // eta of each cascade explicitly
  r->zero_grad();
  loss().backward();
  for (int t = 0; t < 2; ++t) {
    auto& eta = r->cascade(static_cast<size_t>(t))->eta();
    const double an = eta.grad()[0].item<double>();
    const double fd = finite_difference([&] { return loss().item<double>(); }, eta, 0, 1e-6);
    EXPECT_LE(std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-9}), 1e-3);
  }
}

TEST(SensitivityEstimator, SingleCoilOnesAndNormalisedMaps) {
  SensitivityEstimator sme(4, 2);
  auto acs = AcsRegion::for_budget(256);
  auto y1 = phantom_kspace(32, 10);
  EXPECT_TRUE(torch::equal(sme->forward(y1, acs), torch::ones_like(y1)));
  auto y4 = phantom_kspace(32, 11, 4);
  auto maps = sme->forward(y4, acs);
  EXPECT_LT((rss(maps, 1) - 1.0).abs().max().item<double>(), 1e-4);
  EXPECT_THROW(sme->forward(y4, AcsRegion{}), Error);
}

TEST(SensitivityEstimator, TrainedOnSyntheticCoilsRecoversMagnitudes) {
  torch::manual_seed(6);
  const int64_t n = 32, coils = 4;
  AnisotropicOptions o;
  o.num_coils = coils;
  auto train = make_anisotropic_phantoms(24, n, n, 12, o);
  auto test = make_anisotropic_phantoms(8, n, n, 13, o);
  auto truth_maps = synthesize_sensitivities(coils, n, n, o.coil_smoothness);
  std::vector<torch::Tensor> tm;
  for (auto& m : truth_maps) tm.push_back(m.data().abs());
  auto truth = torch::stack(tm).unsqueeze(0);
  const auto acs = AcsRegion::for_budget(n * n / 4);
  SensitivityEstimator sme(8, 2);
  torch::optim::Adam opt(sme->parameters(), torch::optim::AdamOptions(3e-3));
  for (int step = 0; step < 300; ++step) {
    const auto& s = train.samples[static_cast<size_t>(step) % train.samples.size()];
    auto est = sme->forward(s.kspace.unsqueeze(0), acs).abs();
    auto loss = (est - truth).abs().mean();
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  torch::NoGradGuard g;
  std::vector<torch::Tensor> errors;
  for (const auto& s : test.samples) errors.push_back((sme->forward(s.kspace.unsqueeze(0), acs).abs() - truth).abs().flatten());
  const double median = torch::cat(errors).median().item<double>();
  RecordProperty("median_abs_error", std::to_string(median));
  EXPECT_LE(median, 0.1);
}

TEST(SegPredictor, ShapeAndConstantInputGivesConstantScores) {
  torch::manual_seed(7);
  SegPredictor seg(SegPredictorSpec{3, 8, 2});
  seg->eval();
  auto scores = seg->forward(torch::rand({2, 32, 48}));
  EXPECT_EQ(scores.sizes(), (std::vector<int64_t>{2, 3, 32, 48}));
  auto flat = seg->forward(torch::full({1, 32, 32}, 0.4));
  auto ref = flat.select(2, 16).select(2, 16).unsqueeze(-1).unsqueeze(-1);
  EXPECT_LT((flat - ref).abs().max().item<double>(), 1e-4);
}

TEST(SegPredictor, BinarisationTiesAndOneHot) {
  auto scores = torch::tensor({0.2, 0.5, 0.3}).view({3, 1, 1});
  auto one_hot = binarize_segmentation(scores);
  EXPECT_TRUE(torch::equal(one_hot.flatten(), torch::tensor({0.0F, 1.0F, 0.0F})));
  auto tie = binarize_segmentation(torch::tensor({0.5, 0.5}).view({2, 1, 1}));
  EXPECT_TRUE(torch::equal(tie.flatten(), torch::tensor({1.0F, 0.0F})));
  auto rnd = torch::randn({2, 4, 8, 8});
  auto b = binarize_segmentation(rnd);
  EXPECT_TRUE(torch::all(b.sum(1) == 1).item<bool>());
  EXPECT_TRUE(torch::equal(binarize_segmentation(rnd + 3.0), b));
}

TEST(ClsPredictor, SizeAgnosticAndDeterministic) {
  torch::manual_seed(8);
  ClsPredictor cls(ClsPredictorSpec{8, {1, 1}, 2});
  cls->eval();
  EXPECT_EQ(cls->forward(torch::rand({1, 64, 64})).sizes(), (std::vector<int64_t>{1, 2}));
  EXPECT_EQ(cls->forward(torch::rand({1, 128, 128})).sizes(), (std::vector<int64_t>{1, 2}));
  auto x = torch::rand({1, 64, 64});
  auto out = cls->forward(torch::cat({x, x}));
  EXPECT_TRUE(torch::equal(out[0], out[1]));
}

TEST(Predictors, TruncatedVariantsPassGradientChecks) {
  torch::manual_seed(9);
  SegPredictor seg(SegPredictorSpec{3, 4, 1});
  seg->to(torch::kFloat64);
  auto img = torch::rand({1, 8, 8}, torch::kFloat64);
  auto target = binarize_segmentation(torch::rand({1, 3, 8, 8}, torch::kFloat64)).to(torch::kFloat64);
  expect_gradients_match(*seg, [&] { return 1.0 - dice_scores(torch::softmax(seg->forward(img), 1), target).mean(); },
                         10, 2);
  ClsPredictor cls(ClsPredictorSpec{4, {1}, 2});
  cls->to(torch::kFloat64);
  cls->eval();
  auto x = torch::rand({2, 32, 32}, torch::kFloat64);
  auto labels = torch::tensor({0, 1}, torch::kInt64);
  expect_gradients_match(*cls, [&] { return bce_loss_batch(cls->forward(x), labels).mean(); }, 10, 3);
}

TEST(SegPredictor, LearnsTwoClassDiscs) {
  torch::manual_seed(10);
  auto train = make_seg_phantoms(48, 32, 32, 2, 20);
  auto test = make_seg_phantoms(16, 32, 32, 2, 21);
  SegPredictor seg(SegPredictorSpec{2, 8, 2});
  torch::optim::Adam opt(seg->parameters(), torch::optim::AdamOptions(3e-3));
  auto batch = [](const Dataset& d, size_t start, size_t count) {
    std::vector<torch::Tensor> x, z;
    for (size_t i = start; i < start + count; ++i) {
      x.push_back(d.samples[i].target);
      z.push_back(*d.samples[i].seg_map);
    }
    return std::pair{torch::stack(x), torch::stack(z)};
  };
  for (int epoch = 0; epoch < 15; ++epoch) {
    for (size_t i = 0; i < train.samples.size(); i += 4) {
      auto [x, z] = batch(train, i, 4);
      auto loss = 1.0 - dice_scores(torch::softmax(seg->forward(x), 1), z).mean();
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
  }
  seg->eval();
  torch::NoGradGuard g;
  auto [x, z] = batch(test, 0, test.samples.size());
  const double dice = dice_scores(binarize_segmentation(seg->forward(x)), z).mean().item<double>();
  RecordProperty("heldout_dice", std::to_string(dice));
  EXPECT_GE(dice, 0.95);
}

TEST(ClsPredictor, DetectsBrightBlobs) {
  torch::manual_seed(11);
  auto train = make_cls_phantoms(96, 32, 32, 0.5, 30);
  auto test = make_cls_phantoms(40, 32, 32, 0.5, 31);
  ClsPredictor cls(ClsPredictorSpec{8, {1, 1}, 2});
  torch::optim::Adam opt(cls->parameters(), torch::optim::AdamOptions(3e-3));
  auto batch = [](const Dataset& d, size_t start, size_t count) {
    std::vector<torch::Tensor> x;
    std::vector<int64_t> y;
    for (size_t i = start; i < std::min(d.samples.size(), start + count); ++i) {
      x.push_back(d.samples[i].target);
      y.push_back(*d.samples[i].cls_label);
    }
    return std::pair{torch::stack(x), torch::tensor(y, torch::kInt64)};
  };
  for (int epoch = 0; epoch < 15; ++epoch) {
    for (size_t i = 0; i < train.samples.size(); i += 8) {
      auto [x, y] = batch(train, i, 8);
      auto loss = bce_loss_batch(cls->forward(x), y).mean();
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
  }
  cls->eval();
  torch::NoGradGuard g;
  auto [x, y] = batch(test, 0, test.samples.size());
  const double acc = (cls->forward(x).argmax(1) == y).to(torch::kFloat64).mean().item<double>();
  RecordProperty("heldout_accuracy", std::to_string(acc));
  EXPECT_GE(acc, 0.95);
}
