#include "taskmri/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "taskmri/errors.hpp"
#include "taskmri/random.hpp"

namespace taskmri {

namespace {

struct StraightThroughFn : public torch::autograd::Function<StraightThroughFn> {
  static torch::Tensor forward(torch::autograd::AutogradContext* /*ctx*/, const torch::Tensor& hard,
                               const torch::Tensor& /*probs*/) {
    return hard.clone();
  }

  static torch::autograd::variable_list backward(torch::autograd::AutogradContext* /*ctx*/,
                                                 torch::autograd::variable_list grads) {
    return {torch::Tensor(), ste_backward(grads[0])};
  }
};

}  // namespace

AcsRegion AcsRegion::for_budget(int64_t budget) {
  if (budget < 8) return {};
  auto side = static_cast<int64_t>(std::floor(std::sqrt(static_cast<double>(budget) / 8.0)));
  // guard against sqrt rounding on perfect squares
  while ((side + 1) * (side + 1) * 8 <= budget) ++side;
  while (side * side * 8 > budget) --side;
  if (side >= 2 && side % 2 == 1) --side;
  return {side, side};
}

torch::Tensor AcsRegion::indicator(int64_t grid_height, int64_t grid_width) const {
  auto ind = torch::zeros({grid_height, grid_width}, torch::kBool);
  if (empty()) return ind;
  if (height > grid_height || width > grid_width) {
    throw Error(ErrorKind::InvalidInput, "ACS region larger than the grid");
  }
  using torch::indexing::Slice;
  const auto t = top(grid_height);
  const auto l = left(grid_width);
  ind.index_put_({Slice(t, t + height), Slice(l, l + width)}, true);
  return ind;
}

int64_t budget_tolerance(int64_t budget) {
  return std::max<int64_t>(1, std::llround(0.02 * static_cast<double>(budget)));
}

torch::Tensor rescale_probs(const torch::Tensor& p_tilde, double budget) {
  const auto n = static_cast<double>(p_tilde.numel());
  if (budget > n || budget < 0) {
    throw Error(ErrorKind::InvalidBudget, "budget " + std::to_string(budget) + " outside [0, " +
                                              std::to_string(static_cast<int64_t>(n)) + "]");
  }
  if (p_tilde.numel() == 0) return p_tilde;
  const double alpha = budget / n;
  if (alpha == 0.0) return p_tilde * 0.0;
  auto beta_t = p_tilde.mean();
  const double beta = beta_t.item<double>();
  if (beta >= alpha) return p_tilde * (alpha / beta_t);
  return 1.0 - (1.0 - alpha) / (1.0 - beta_t) * (1.0 - p_tilde);
}

torch::Tensor straight_through(const torch::Tensor& hard, const torch::Tensor& probs) {
  return StraightThroughFn::apply(hard.detach(), probs);
}

SamplerImpl::SamplerImpl(int64_t height, int64_t width, int64_t budget, uint64_t seed, std::optional<AcsRegion> acs)
    : height_(height), width_(width), budget_(budget), acs_(acs.value_or(AcsRegion::for_budget(budget))) {
  const auto n = height * width;
  if (height < 1 || width < 1) throw Error(ErrorKind::InvalidInput, "sampler grid must be non-empty");
  if (budget < 1 || budget > n) {
    throw Error(ErrorKind::InvalidBudget, "budget must lie in [1, H*W]");
  }
  if (budget < acs_.size()) throw Error(ErrorKind::InvalidBudget, "budget smaller than the ACS region");
  acs_mask_ = acs_.indicator(height, width);

  const auto free_locations = static_cast<double>(n - acs_.size());
  double rate = free_locations > 0 ? static_cast<double>(budget - acs_.size()) / free_locations : 0.5;
  rate = std::clamp(rate, 1e-4, 1.0 - 1e-4);
  auto gen = make_generator(seed);
  auto jitter = torch::rand({height, width}, gen) * 0.2 - 0.1;
  q_ = register_parameter("q", std::log(rate / (1.0 - rate)) + jitter);
}

torch::Tensor SamplerImpl::probabilities() const {
  auto p_tilde = torch::sigmoid(q_);
  auto free = acs_mask_.logical_not();
  auto rescaled = rescale_probs(p_tilde.masked_select(free), static_cast<double>(budget_ - acs_.size()));
  return torch::ones_like(p_tilde).masked_scatter(free, rescaled);
}

SamplingMask SamplerImpl::draw_training_mask(torch::Generator& generator) const {
  torch::NoGradGuard no_grad;
  auto p = probabilities();
  const auto tol = budget_tolerance(budget_);
  torch::Tensor best;
  int64_t best_gap = -1;
  for (int attempt = 0; attempt < kMaxMaskRedraws; ++attempt) {
    auto u = torch::rand({height_, width_}, generator, p.options());
    auto m = (u < p).to(p.scalar_type()).masked_fill(acs_mask_, 1.0);
    const auto gap = std::llabs(std::llround(m.sum().item<double>()) - budget_);
    if (best_gap < 0 || gap < best_gap) {
      best = m;
      best_gap = gap;
    }
    if (gap <= tol) break;
  }
  return {best, true};
}

SamplingMask SamplerImpl::draw_training_mask(uint64_t seed) const {
  auto gen = make_generator(seed);
  return draw_training_mask(gen);
}

torch::Tensor SamplerImpl::relaxed_training_mask(torch::Generator& generator) const {
  auto hard = draw_training_mask(generator).values;
  return straight_through(hard, probabilities());
}

SamplingMask SamplerImpl::binarize_eval_mask() const {
  auto q = q_.detach().to(torch::kFloat64).contiguous();
  auto acs = acs_mask_.contiguous();
  const auto n = height_ * width_;
  const double* qv = q.data_ptr<double>();
  const bool* av = acs.data_ptr<bool>();
  std::vector<int64_t> order;
  order.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    if (!av[i]) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [qv](int64_t a, int64_t b) { return qv[a] > qv[b]; });
  auto m = acs.to(torch::kFloat32).flatten().clone();
  auto* mv = m.data_ptr<float>();
  const auto take = static_cast<size_t>(budget_ - acs_.size());
  for (size_t i = 0; i < take; ++i) mv[order[i]] = 1.0F;
  return {m.view({height_, width_}), true};
}

double poisson_disc_radius(double r0, int64_t row, int64_t col, int64_t height, int64_t width) {
  const double dy = static_cast<double>(row - height / 2);
  const double dx = static_cast<double>(col - width / 2);
  const double hy = static_cast<double>(height / 2);
  const double hx = static_cast<double>(width / 2);
  const double d_max = std::max(std::sqrt(hy * hy + hx * hx), 1.0);
  return r0 * (1.0 + std::sqrt(dy * dy + dx * dx) / d_max);
}

namespace {

// Dart throwing over a fixed candidate order with a bucket grid for neighbour
// lookups. Returns accepted flat indices.
std::vector<int64_t> throw_darts(const std::vector<int64_t>& candidates, double r0, int64_t height, int64_t width) {
  std::vector<int64_t> accepted;
  if (r0 <= 0) return candidates;
  const double r_max = 2.0 * r0;
  const double cell = std::max(r_max, 1.0);
  const auto gh = static_cast<int64_t>(std::ceil(static_cast<double>(height) / cell)) + 1;
  const auto gw = static_cast<int64_t>(std::ceil(static_cast<double>(width) / cell)) + 1;
  std::vector<std::vector<int64_t>> buckets(static_cast<size_t>(gh * gw));
  std::vector<double> radius(static_cast<size_t>(height * width), 0.0);
  for (auto idx : candidates) {
    const auto r = idx / width;
    const auto c = idx % width;
    const double rc = poisson_disc_radius(r0, r, c, height, width);
    const auto br = static_cast<int64_t>(static_cast<double>(r) / cell);
    const auto bc = static_cast<int64_t>(static_cast<double>(c) / cell);
    bool ok = true;
    for (int64_t i = std::max<int64_t>(0, br - 1); ok && i <= std::min(gh - 1, br + 1); ++i) {
      for (int64_t j = std::max<int64_t>(0, bc - 1); ok && j <= std::min(gw - 1, bc + 1); ++j) {
        for (auto other : buckets[static_cast<size_t>(i * gw + j)]) {
          const double dy = static_cast<double>(other / width - r);
          const double dx = static_cast<double>(other % width - c);
          const double need = std::max(rc, radius[static_cast<size_t>(other)]);
          if (dy * dy + dx * dx < need * need) {
            ok = false;
            break;
          }
        }
      }
    }
    if (ok) {
      accepted.push_back(idx);
      radius[static_cast<size_t>(idx)] = rc;
      buckets[static_cast<size_t>(br * gw + bc)].push_back(idx);
    }
  }
  return accepted;
}

}  // namespace

PoissonDiscResult make_poisson_disc_mask_with_radius(int64_t height, int64_t width, int64_t budget,
                                                     const AcsRegion& acs, uint64_t seed) {
  const auto n = height * width;
  if (budget < 1 || budget > n) throw Error(ErrorKind::InvalidBudget, "budget must lie in [1, H*W]");
  if (budget < acs.size()) throw Error(ErrorKind::InvalidBudget, "budget smaller than the ACS region");
  auto acs_ind = acs.indicator(height, width).contiguous();
  if (budget == n) return {full_mask(height, width), 0.0};

  std::vector<int64_t> candidates;
  const bool* av = acs_ind.data_ptr<bool>();
  for (int64_t i = 0; i < n; ++i) {
    if (!av[i]) candidates.push_back(i);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);

  const auto target = budget - acs.size();
  const auto tol = std::max<int64_t>(1, std::llround(0.02 * static_cast<double>(budget)));
  auto to_mask = [&](const std::vector<int64_t>& picked) {
    auto m = acs_ind.to(torch::kFloat32).flatten().clone();
    auto* mv = m.data_ptr<float>();
    for (auto i : picked) mv[i] = 1.0F;
    return SamplingMask{m.view({height, width}), true};
  };
  if (target == 0) return {to_mask({}), 0.0};

  double lo = 0.0;
  double hi = static_cast<double>(std::max(height, width));
  for (int step = 0; step < 64; ++step) {
    const double mid = 0.5 * (lo + hi);
    auto picked = throw_darts(candidates, mid, height, width);
    const auto count = static_cast<int64_t>(picked.size());
    if (std::llabs(count - target) <= tol) return {to_mask(picked), mid};
    if (count > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  throw Error(ErrorKind::GenerationFailure, "Poisson-disc radius bisection did not reach the budget");
}

SamplingMask make_poisson_disc_mask(int64_t height, int64_t width, int64_t budget, const AcsRegion& acs,
                                    uint64_t seed) {
  return make_poisson_disc_mask_with_radius(height, width, budget, acs, seed).mask;
}

SamplingMask make_lowpass_mask(int64_t height, int64_t width, int64_t budget) {
  const auto n = height * width;
  if (budget < 1 || budget > n) throw Error(ErrorKind::InvalidBudget, "budget must lie in [1, H*W]");
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  auto dist2 = [&](int64_t idx) {
    const auto dy = idx / width - height / 2;
    const auto dx = idx % width - width / 2;
    return dy * dy + dx * dx;
  };
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) { return dist2(a) < dist2(b); });
  auto m = torch::zeros({n}, torch::kFloat32);
  auto* mv = m.data_ptr<float>();
  for (int64_t i = 0; i < budget; ++i) mv[order[static_cast<size_t>(i)]] = 1.0F;
  return {m.view({height, width}), true};
}

}  // namespace taskmri
