#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "taskmri/datasets.hpp"
#include "taskmri/predictors.hpp"
#include "taskmri/retriever.hpp"

namespace taskmri {

enum class MaskKind { Learned, PoissonDisc, LowPass };
MaskKind parse_mask_kind(const std::string& name);
std::string to_string(MaskKind kind);

enum class Stage { Pretrain, Finetune, TwoStage };
Stage parse_stage(const std::string& name);
std::string to_string(Stage stage);

struct DatasetsConfig {
  std::string path;  // dataset root; empty means "pass one on the command line"
  std::string ood_path;
};

struct ForwardModelConfig {
  double noise_sigma = 5e-4;  // relative to |DC|, per real and imaginary part
};

struct SamplerConfig {
  MaskKind kind = MaskKind::Learned;
  double acceleration = 4.0;
  bool frozen = false;
  // Fine-tuning forward pass: fresh Bernoulli draws, or the binarised mask
  // with straight-through gradients to q. Pretraining always draws.
  bool finetune_bernoulli = false;
};

struct RetrieverSection {
  RetrieverConfig network;
  bool enabled = true;  // false: the predictor sees the zero-filled image
  bool frozen = false;
};

struct PredictorsConfig {
  SegPredictorSpec segmentation;
  ClsPredictorSpec classification;
};

struct TrainConfig {
  Task task = Task::FullFov;
  Stage stage = Stage::Pretrain;
  double learning_rate = 1e-3;
  std::optional<double> finetune_learning_rate;  // defaults to learning_rate
  int64_t patience = 10;
  int64_t max_epochs = 100;
  std::optional<int64_t> finetune_max_epochs;  // defaults to max_epochs
  int64_t batch_size = 4;
  double grad_clip = 1.0;  // global-norm cap; 0 disables
  bool lr_sweep = false;   // try each of {1e-2, 1e-3, 1e-4} and keep the best validation run
  std::string pretrain_checkpoint;

  double finetune_lr() const { return finetune_learning_rate.value_or(learning_rate); }
  int64_t finetune_epochs() const { return finetune_max_epochs.value_or(max_epochs); }
  void validate() const;
};

enum class AblationKind { CoDesign, Pretrain };

struct AblationConfig {
  AblationKind kind = AblationKind::CoDesign;
  // pretrain ablation: epochs of the pretrain stage inside the equal-budget schedule
  int64_t pretrain_epochs = 0;
};

struct EvaluationConfig {
  std::string split = "test";
  uint64_t noise_seed = 1234;
};

struct Config {
  uint64_t seed = 0;
  DatasetsConfig datasets;
  ForwardModelConfig forward_model;
  SamplerConfig sampler;
  RetrieverSection retriever;
  PredictorsConfig predictors;
  TrainConfig training;
  AblationConfig ablation;
  EvaluationConfig evaluation;

  /// Parses JSON; unknown keys and wrong types raise a Config error naming the field path.
  static Config from_json(const nlohmann::json& j);
  static Config load(const std::filesystem::path& file);
  nlohmann::ordered_json to_json() const;
};

}  // namespace taskmri
