#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace taskmri {

/// Axis-aligned region of interest in pixel units.
struct RoiBox {
  int64_t top = 0;
  int64_t left = 0;
  int64_t height = 0;
  int64_t width = 0;

  bool fits(int64_t image_height, int64_t image_width) const;
  static RoiBox full(int64_t image_height, int64_t image_width) { return {0, 0, image_height, image_width}; }
  bool operator==(const RoiBox&) const = default;
};

inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();
inline constexpr double kDiceSmoothing = 1e-6;

// Scalar metrics on single real H x W images, accumulated in double in
// row-major order. A zero error yields kInfinitePsnr.
double psnr(const torch::Tensor& estimate, const torch::Tensor& target);
double local_psnr(const torch::Tensor& estimate, const torch::Tensor& target, const RoiBox& roi);

// Differentiable batch forms on [B, H, W]; one value per sample.
torch::Tensor psnr_batch(const torch::Tensor& estimate, const torch::Tensor& target);
torch::Tensor local_psnr_batch(const torch::Tensor& estimate, const torch::Tensor& target,
                               const std::vector<RoiBox>& rois);

/// Macro Dice over the non-background classes:
///   mean_k (2 |A_k n B_k| + eps) / (|A_k| + |B_k| + eps),  k = 1..c-1.
/// Accepts [c, H, W] or [B, c, H, W]; batched inputs return per-sample scores.
/// Soft (post-softmax) or binarised predictions both work.
torch::Tensor dice_scores(const torch::Tensor& prediction, const torch::Tensor& target);
double dice_score(const torch::Tensor& prediction, const torch::Tensor& target);

/// Cross entropy of softmax(logits) against a one-hot label, probabilities
/// clamped at 1e-12. Scalar form for a single 2-vector of logits.
double bce_loss(const torch::Tensor& logits, int label);
/// Batch form: logits [B, 2], labels int64 [B]; one loss per sample.
torch::Tensor bce_loss_batch(const torch::Tensor& logits, const torch::Tensor& labels);

struct ClsMetrics {
  double accuracy = 0.0;
  double f1 = 0.0;
  int64_t tp = 0, tn = 0, fp = 0, fn = 0;
  /// 2TP + FP + FN == 0; F1 is reported as 0.
  bool degenerate_f1 = false;
};
ClsMetrics cls_metrics(const std::vector<int>& predictions, const std::vector<int>& labels);

struct PairedTTest {
  double t_statistic = 0.0;
  double p_value = 1.0;
  /// Fraction of samples with b > a, in [0, 1].
  double fraction_improved = 0.0;
  int64_t n = 0;
  /// Differences have zero variance but nonzero mean; p is the 0 sentinel.
  bool zero_variance = false;
};

/// Two-sided paired-samples t-test on d = b - a. Throws UndefinedStatistic if
/// every difference is zero, InvalidInput on length mismatch or n < 2.
PairedTTest paired_ttest(const std::vector<double>& values_a, const std::vector<double>& values_b);

/// Per-sample metric table with optional paired comparison.
struct MetricReport {
  struct Row {
    std::string sample_id;
    std::vector<double> values;
  };
  struct Comparison {
    std::string baseline;
    std::string metric;
    double p_value = 1.0;
    double fraction_improved = 0.0;
    double t_statistic = 0.0;
    bool degenerate = false;
  };

  std::string task;
  std::vector<std::string> metric_names;
  std::vector<Row> rows;
  std::map<std::string, std::string> tags;
  std::optional<Comparison> comparison;

  void add_row(std::string sample_id, std::vector<double> values);
  /// Mean of a column over finite entries (infinite PSNRs are excluded).
  double aggregate(const std::string& metric) const;
  std::vector<double> column(const std::string& metric) const;
  size_t excluded_count(const std::string& metric) const;

  std::string to_csv() const;
  std::string summary_json() const;
  static MetricReport from_csv(const std::string& csv, std::string task = {});
};

}  // namespace taskmri
