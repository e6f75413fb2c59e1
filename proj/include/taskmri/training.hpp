#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "taskmri/checkpoint.hpp"
#include "taskmri/config.hpp"
#include "taskmri/datasets.hpp"
#include "taskmri/metrics.hpp"
#include "taskmri/predictors.hpp"
#include "taskmri/retriever.hpp"
#include "taskmri/sampler.hpp"

namespace taskmri {

/// Stacked tensors for a list of dataset indices.
struct Batch {
  std::vector<std::string> sample_ids;
  torch::Tensor kspace;  // complex [B, C, H, W]
  torch::Tensor target;  // real [B, H, W]
  std::vector<RoiBox> rois;
  torch::Tensor seg_maps;  // [B, c, H, W] when present
  torch::Tensor labels;    // int64 [B] when present
};
Batch make_batch(const Dataset& dataset, const std::vector<size_t>& indices);

/// Number of measured locations for an acceleration factor: round(H W / R).
int64_t budget_for(int64_t height, int64_t width, double acceleration);

/// Sampler (or fixed mask) -> retriever (or zero filling) -> optional predictor.
class Pipeline {
 public:
  struct Output {
    torch::Tensor recon;   // [B, H, W]
    torch::Tensor scores;  // [B, c, H, W] or [B, 2]; undefined without a predictor
  };

  Pipeline(const Config& config, int64_t height, int64_t width, int64_t num_coils);

  /// Attaches a freshly initialised predictor for a segmentation or
  /// classification task; reconstruction tasks attach nothing.
  void attach_predictor(Task task);
  std::optional<Task> predictor_task() const { return predictor_task_; }

  bool learned_mask() const { return static_cast<bool>(sampler_); }
  bool has_retriever() const { return static_cast<bool>(retriever_); }
  const AcsRegion& acs() const { return acs_; }
  int64_t budget() const { return budget_; }
  int64_t height() const { return height_; }
  int64_t width() const { return width_; }

  Sampler& sampler() { return sampler_; }
  Retriever& retriever() { return retriever_; }
  SegPredictor& seg_predictor() { return seg_; }
  ClsPredictor& cls_predictor() { return cls_; }

  /// Binarised top-b mask for a learned sampler, otherwise the fixed mask.
  SamplingMask eval_mask() const;
  /// Mask for one training step. A trainable learned sampler yields a fresh
  /// Bernoulli draw (`bernoulli`) or the binarised mask, both carrying
  /// straight-through gradients to q; otherwise the eval mask.
  torch::Tensor training_mask(torch::Generator& generator, bool sampler_trainable, bool bernoulli) const;

  /// y: complex [B, C, H, W] measurements taken with `mask`.
  Output forward(const torch::Tensor& y, const torch::Tensor& mask);

  std::vector<torch::Tensor> sampler_parameters();
  std::vector<torch::Tensor> retriever_parameters();
  std::vector<torch::Tensor> predictor_parameters();

  void train(bool on);

  StateDict state() const;
  void load_state(const StateDict& state);

  const Config& config() const { return config_; }

 private:
  Config config_;
  int64_t height_, width_, num_coils_, budget_;
  AcsRegion acs_;
  Sampler sampler_{nullptr};
  torch::Tensor fixed_mask_;
  Retriever retriever_{nullptr};
  std::optional<Task> predictor_task_;
  SegPredictor seg_{nullptr};
  ClsPredictor cls_{nullptr};
};

/// Rebuilds a pipeline from a checkpoint (architecture from its config snapshot).
Pipeline pipeline_from_checkpoint(const Checkpoint& checkpoint, int64_t height, int64_t width, int64_t num_coils);

/// Name of the validation metric for a task (higher is better for all).
std::string metric_name(Task task);

/// Training loss for a task; pretraining uses Task::FullFov.
torch::Tensor task_loss(Task task, const Pipeline::Output& out, const Batch& batch);

struct EvalOptions {
  double noise_sigma = 5e-4;
  uint64_t noise_seed = 0;  // per-sample noise uses derive_seed(noise_seed, sample_id)
  int64_t batch_size = 8;
};

/// Per-sample metric report on `indices` with the eval mask.
///
/// Columns: full_fov psnr; roi_recon local_psnr, psnr; segmentation dice;
/// classification prediction, label, p_lesion, bce.
MetricReport evaluate(Pipeline& pipeline, const Dataset& dataset, const std::vector<size_t>& indices, Task task,
                      const EvalOptions& options);

/// The task's headline number from a report: mean PSNR / local PSNR / Dice, or accuracy.
double primary_metric(const MetricReport& report, Task task);

/// Patience-based early stopping on a higher-is-better metric.
class EarlyStopping {
 public:
  explicit EarlyStopping(int64_t patience);
  /// Records an epoch; returns true when it strictly improves on every earlier one.
  bool observe(int64_t epoch, double metric);
  /// True once `patience` epochs have passed without improvement.
  bool should_stop(int64_t epoch) const;
  int64_t best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_; }

 private:
  int64_t patience_;
  int64_t best_epoch_ = -1;
  double best_ = -std::numeric_limits<double>::infinity();
};

struct EpochLog {
  int64_t epoch = 0;  // 0 is the state before any update
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  double val_metric = 0.0;
  bool improved = false;
};

struct StageOptions {
  std::string name = "pretrain";
  Task objective = Task::FullFov;
  double learning_rate = 1e-3;
  int64_t max_epochs = 100;
  int64_t patience = 10;
  int64_t batch_size = 4;
  double grad_clip = 1.0;
  bool train_sampler = true;
  bool train_retriever = true;
  bool train_predictor = true;
  bool bernoulli_masks = true;
  double noise_sigma = 5e-4;
  uint64_t seed = 0;
  uint64_t val_noise_seed = 0;
  std::function<void(const EpochLog&)> on_epoch;
};

struct StageResult {
  std::vector<EpochLog> log;
  int64_t best_epoch = 0;
  double best_metric = 0.0;
  StateDict best_state;
  bool diverged = false;
  std::string divergence_reason;
};

/// Trains the enabled parameter groups with Adam on the objective, validates
/// each epoch with the eval mask and keeps the best state (the untrained state
/// counts as epoch 0). The pipeline holds the best state on return. A NaN loss
/// or non-finite reconstruction stops training with `diverged` set.
StageResult run_stage(Pipeline& pipeline, const Dataset& dataset, const SplitManifest& split,
                      const StageOptions& options);

/// Stage options for pretraining (-PSNR, sampler and retriever).
StageOptions pretrain_options(const Config& config);
/// Stage options for task fine-tuning; sampler/retriever freezing follows the config.
StageOptions finetune_options(const Config& config);

/// Pretrains sampler + retriever on full-FOV PSNR.
StageResult pretrain(Pipeline& pipeline, const Dataset& dataset, const SplitManifest& split, const Config& config,
                     std::function<void(const EpochLog&)> on_epoch = {});

/// Attaches a fresh predictor (segmentation/classification) and trains on the
/// task loss. Throws StagedTraining for predictor tasks when `pretrained` is false.
StageResult finetune(Pipeline& pipeline, bool pretrained, const Dataset& dataset, const SplitManifest& split,
                     const Config& config, std::function<void(const EpochLog&)> on_epoch = {});

struct GridCell {
  std::string name;  // e.g. "poisson_disc/frozen"
  MaskKind mask = MaskKind::PoissonDisc;
  bool task_trained = false;
  double val_metric = 0.0;
  MetricReport test_report;
  Checkpoint checkpoint;
  std::vector<EpochLog> pretrain_log;
  std::vector<EpochLog> finetune_log;
  SamplingMask mask_used;
};

/// {Poisson-disc, learned} x {frozen, task fine-tuned}; frozen cells keep q and
/// the retriever fixed after pretraining and train only the predictor if any.
std::vector<GridCell> run_ablation_grid(const Dataset& dataset, const SplitManifest& split, const Config& config);

/// Equal-epoch comparison of pretraining for predictor tasks:
///   predictor_only      sampler + predictor on zero-filled images, no pretrain
///   vn_no_pretrain      sampler + retriever + predictor trained jointly from scratch
///   vn_pretrain         pretrain for ablation.pretrain_epochs, then fine-tune
/// Every row uses max_epochs task epochs in total.
std::vector<GridCell> run_pretrain_study(const Dataset& dataset, const SplitManifest& split, const Config& config);

/// Checkpoint of the pipeline's current state.
Checkpoint make_checkpoint(const Pipeline& pipeline, const std::string& stage, int64_t epoch, Task task,
                           double val_metric);

}  // namespace taskmri
