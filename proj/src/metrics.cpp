#include "taskmri/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>
#include "taskmri/log.hpp"

#include "taskmri/errors.hpp"

namespace taskmri {

namespace {

torch::Tensor as_double_image(const torch::Tensor& t) {
  if (t.dim() != 2) throw Error(ErrorKind::InvalidInput, "expected a single H x W image");
  return t.detach().to(torch::kFloat64).contiguous();
}

double peak_ratio_db(double peak, double mse) {
  if (mse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(peak * peak / mse);
}

double max_value(const torch::Tensor& x) { return x.max().item<double>(); }

}  // namespace

bool RoiBox::fits(int64_t image_height, int64_t image_width) const {
  return top >= 0 && left >= 0 && height >= 1 && width >= 1 && top + height <= image_height &&
         left + width <= image_width;
}

double local_psnr(const torch::Tensor& estimate, const torch::Tensor& target, const RoiBox& roi) {
  auto e = as_double_image(estimate);
  auto x = as_double_image(target);
  if (e.sizes() != x.sizes()) throw Error(ErrorKind::InvalidInput, "estimate and target shapes differ");
  const auto h = x.size(0);
  const auto w = x.size(1);
  if (!roi.fits(h, w)) throw Error(ErrorKind::InvalidInput, "ROI lies outside the image");
  const double* ev = e.data_ptr<double>();
  const double* xv = x.data_ptr<double>();
  double sum = 0.0;
  for (int64_t r = roi.top; r < roi.top + roi.height; ++r) {
    for (int64_t c = roi.left; c < roi.left + roi.width; ++c) {
      const double d = ev[r * w + c] - xv[r * w + c];
      sum += d * d;
    }
  }
  const double mse = sum / static_cast<double>(roi.height * roi.width);
  return peak_ratio_db(max_value(x), mse);
}

double psnr(const torch::Tensor& estimate, const torch::Tensor& target) {
  return local_psnr(estimate, target, RoiBox::full(target.size(0), target.size(1)));
}

torch::Tensor psnr_batch(const torch::Tensor& estimate, const torch::Tensor& target) {
  auto peak = target.detach().amax({-2, -1});
  auto mse = (estimate - target).square().mean({-2, -1});
  return 10.0 * torch::log10(peak.square() / mse);
}

torch::Tensor local_psnr_batch(const torch::Tensor& estimate, const torch::Tensor& target,
                               const std::vector<RoiBox>& rois) {
  using torch::indexing::Slice;
  if (static_cast<int64_t>(rois.size()) != estimate.size(0)) {
    throw Error(ErrorKind::InvalidInput, "one ROI per sample required");
  }
  std::vector<torch::Tensor> values;
  for (size_t i = 0; i < rois.size(); ++i) {
    const auto& roi = rois[i];
    if (!roi.fits(target.size(-2), target.size(-1))) throw Error(ErrorKind::InvalidInput, "ROI outside image");
    auto idx = static_cast<int64_t>(i);
    const std::vector<torch::indexing::TensorIndex> region{Slice(roi.top, roi.top + roi.height),
                                                           Slice(roi.left, roi.left + roi.width)};
    auto e = estimate[idx].index(region);
    auto x = target[idx].index(region);
    auto peak = target[idx].detach().max();
    values.push_back(10.0 * torch::log10(peak.square() / (e - x).square().mean()));
  }
  return torch::stack(values);
}

torch::Tensor dice_scores(const torch::Tensor& prediction, const torch::Tensor& target) {
  if (prediction.sizes() != target.sizes()) throw Error(ErrorKind::InvalidInput, "Dice inputs differ in shape");
  const bool batched = prediction.dim() == 4;
  auto p = batched ? prediction : prediction.unsqueeze(0);
  auto z = (batched ? target : target.unsqueeze(0)).to(p.scalar_type());
  if (p.size(1) < 2) throw Error(ErrorKind::InvalidInput, "Dice needs at least two classes");
  const std::vector<int64_t> dims{2, 3};
  auto inter = (p * z).sum(dims);
  auto total = p.sum(dims) + z.sum(dims);
  auto per_class = (2.0 * inter + kDiceSmoothing) / (total + kDiceSmoothing);
  auto scores = per_class.narrow(1, 1, p.size(1) - 1).mean(1);
  return batched ? scores : scores.squeeze(0);
}

double dice_score(const torch::Tensor& prediction, const torch::Tensor& target) {
  auto s = dice_scores(prediction.detach().to(torch::kFloat64), target.detach().to(torch::kFloat64));
  return s.mean().item<double>();
}

torch::Tensor bce_loss_batch(const torch::Tensor& logits, const torch::Tensor& labels) {
  auto logp = torch::log_softmax(logits, 1);
  auto picked = logp.gather(1, labels.to(torch::kLong).unsqueeze(1)).squeeze(1);
  return -picked.clamp_min(std::log(1e-12));
}

double bce_loss(const torch::Tensor& logits, int label) {
  if (label != 0 && label != 1) throw Error(ErrorKind::InvalidInput, "label must be 0 or 1");
  auto l = logits.detach().to(torch::kFloat64).reshape({1, -1});
  if (!torch::isfinite(l).all().item<bool>()) throw Error(ErrorKind::InvalidInput, "non-finite logits");
  return bce_loss_batch(l, torch::tensor({static_cast<int64_t>(label)})).item<double>();
}

ClsMetrics cls_metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.empty() || predictions.size() != labels.size()) {
    throw Error(ErrorKind::InvalidInput, "predictions and labels must be equal-length and nonempty");
  }
  ClsMetrics m;
  for (size_t i = 0; i < predictions.size(); ++i) {
    const bool pred = predictions[i] == 1;
    const bool truth = labels[i] == 1;
    if (pred && truth) ++m.tp;
    else if (!pred && !truth) ++m.tn;
    else if (pred) ++m.fp;
    else ++m.fn;
  }
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(predictions.size());
  const auto denom = 2 * m.tp + m.fp + m.fn;
  if (denom == 0) {
    m.degenerate_f1 = true;
    m.f1 = 0.0;
    log::warn("F1 undefined (no positives predicted or present); reporting 0");
  } else {
    m.f1 = static_cast<double>(2 * m.tp) / static_cast<double>(denom);
  }
  return m;
}

PairedTTest paired_ttest(const std::vector<double>& values_a, const std::vector<double>& values_b) {
  if (values_a.size() != values_b.size()) throw Error(ErrorKind::InvalidInput, "paired samples differ in length");
  if (values_a.size() < 2) throw Error(ErrorKind::InvalidInput, "paired t-test needs at least two pairs");
  const auto n = values_a.size();
  std::vector<double> d(n);
  size_t improved = 0;
  for (size_t i = 0; i < n; ++i) {
    d[i] = values_b[i] - values_a[i];
    if (values_b[i] > values_a[i]) ++improved;
  }
  if (std::all_of(d.begin(), d.end(), [](double v) { return v == 0.0; })) {
    throw Error(ErrorKind::UndefinedStatistic, "all paired differences are zero");
  }
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(n - 1);

  PairedTTest out;
  out.n = static_cast<int64_t>(n);
  out.fraction_improved = static_cast<double>(improved) / static_cast<double>(n);
  // relative to the scale of the differences, a variance this small is rounding noise
  if (var <= 1e-24 * mean * mean) {
    out.zero_variance = true;
    out.t_statistic = mean > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    out.p_value = 0.0;
    return out;
  }
  out.t_statistic = mean / std::sqrt(var / static_cast<double>(n));
  boost::math::students_t dist(static_cast<double>(n - 1));
  out.p_value = 2.0 * boost::math::cdf(dist, -std::abs(out.t_statistic));
  return out;
}

void MetricReport::add_row(std::string sample_id, std::vector<double> values) {
  if (values.size() != metric_names.size()) throw Error(ErrorKind::InvalidInput, "row width mismatch");
  rows.push_back({std::move(sample_id), std::move(values)});
}

std::vector<double> MetricReport::column(const std::string& metric) const {
  auto it = std::find(metric_names.begin(), metric_names.end(), metric);
  if (it == metric_names.end()) throw Error(ErrorKind::InvalidInput, "unknown metric " + metric);
  const auto j = static_cast<size_t>(it - metric_names.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.values[j]);
  return out;
}

double MetricReport::aggregate(const std::string& metric) const {
  double sum = 0.0;
  size_t count = 0;
  for (double v : column(metric)) {
    if (std::isfinite(v)) {
      sum += v;
      ++count;
    }
  }
  const auto excluded = excluded_count(metric);
  if (excluded > 0) log::warn(metric + ": " + std::to_string(excluded) + " non-finite value(s) excluded from the mean");
  return count == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(count);
}

size_t MetricReport::excluded_count(const std::string& metric) const {
  size_t n = 0;
  for (double v : column(metric)) n += std::isfinite(v) ? 0 : 1;
  return n;
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out << "sample_id";
  for (const auto& m : metric_names) out << ',' << m;
  out << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.sample_id;
    for (double v : r.values) out << ',' << v;
    out << '\n';
  }
  return out.str();
}

std::string MetricReport::summary_json() const {
  nlohmann::ordered_json j;
  j["task"] = task;
  j["num_samples"] = rows.size();
  for (const auto& m : metric_names) {
    j["mean"][m] = aggregate(m);
    j["excluded_non_finite"][m] = excluded_count(m);
  }
  for (const auto& [k, v] : tags) j["tags"][k] = v;
  if (comparison) {
    j["comparison"] = {{"baseline", comparison->baseline},
                       {"metric", comparison->metric},
                       {"p_value", comparison->p_value},
                       {"percent_improved", 100.0 * comparison->fraction_improved},
                       {"t_statistic", std::isfinite(comparison->t_statistic)
                                           ? nlohmann::ordered_json(comparison->t_statistic)
                                           : nlohmann::ordered_json(comparison->t_statistic > 0 ? "inf" : "-inf")},
                       {"degenerate", comparison->degenerate}};
  }
  return j.dump(2) + "\n";
}

MetricReport MetricReport::from_csv(const std::string& csv, std::string task) {
  MetricReport report;
  report.task = std::move(task);
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::Schema, "empty metric CSV");
  {
    std::istringstream header(line);
    std::string cell;
    std::getline(header, cell, ',');
    while (std::getline(header, cell, ',')) report.metric_names.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string id;
    std::string cell;
    std::getline(row, id, ',');
    std::vector<double> values;
    while (std::getline(row, cell, ',')) values.push_back(std::stod(cell));
    report.add_row(id, values);
  }
  return report;
}

}  // namespace taskmri
