#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "taskmri/config.hpp"
#include "taskmri/datasets.hpp"
#include "taskmri/mask.hpp"
#include "taskmri/metrics.hpp"
#include "taskmri/psf.hpp"
#include "taskmri/training.hpp"

namespace taskmri {

/// Environment variable that relocates relative output directories.
inline constexpr const char* kRunRootEnv = "TASKMRI_RUN_ROOT";

/// `out` when absolute; otherwise joined onto $TASKMRI_RUN_ROOT (or the
/// working directory). An empty `out` uses `fallback`.
std::filesystem::path resolve_output_dir(const std::string& out, const std::string& fallback);

/// Source revision baked in at build time.
std::string source_revision();

/// Records every file a command writes and serialises itself as manifest.json.
class RunContext {
 public:
  RunContext(std::string command, std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  void set_config(nlohmann::ordered_json config) { config_ = std::move(config); }
  void set_seed(const std::string& name, uint64_t seed) { seeds_[name] = seed; }
  /// Registers a file written under dir() (absolute or relative path).
  void record(const std::filesystem::path& file);
  void record_all(const std::vector<std::filesystem::path>& files);
  std::filesystem::path write_text(const std::string& relative, const std::string& content);
  std::filesystem::path write_json(const std::string& relative, const nlohmann::ordered_json& j);
  /// Writes manifest.json; `duration_seconds` is the only timing field.
  std::filesystem::path finish();
  const std::vector<std::string>& artifacts() const { return artifacts_; }

 private:
  std::string command_;
  std::filesystem::path dir_;
  nlohmann::ordered_json config_ = nlohmann::ordered_json::object();
  std::map<std::string, uint64_t> seeds_;
  std::vector<std::string> artifacts_;
  std::chrono::steady_clock::time_point start_;
};

/// Binary PGM (P5) with values linearly scaled so the maximum maps to 255.
void write_pgm(const std::filesystem::path& file, const torch::Tensor& image);
/// Mask from a PGM written by write_pgm (nonzero pixels are sampled).
SamplingMask read_mask_pgm(const std::filesystem::path& file);

/// Writes mask.pgm (0/255) and mask.f32 (row-major float32 grid) under `stem`.
std::vector<std::filesystem::path> write_mask(const std::filesystem::path& stem, const SamplingMask& mask);

/// Height, width and a compatible coil count for rebuilding a checkpoint.
struct CheckpointGeometry {
  int64_t height = 0;
  int64_t width = 0;
  int64_t num_coils = 1;
};
CheckpointGeometry checkpoint_geometry(const Checkpoint& checkpoint);

/// Per-sample values compared by --compare-to (higher is better).
std::vector<double> comparison_values(const MetricReport& report, Task task);

/// Paired comparison of `candidate` against `baseline` on matching sample ids.
MetricReport::Comparison compare_reports(const MetricReport& candidate, const MetricReport& baseline, Task task,
                                         const std::string& baseline_name);

/// 2x2 confusion matrix CSV (rows: true label, columns: prediction).
std::string confusion_matrix_csv(const MetricReport& report);

/// Per-epoch log CSV: epoch,train_loss,val_metric.
std::string epoch_log_csv(const std::vector<EpochLog>& log);

struct GenerateOptions {
  Task task = Task::RoiRecon;
  int64_t count = 500;
  int64_t height = 64;
  int64_t width = 64;
  uint64_t seed = 0;
  int64_t num_classes = 5;
  double lesion_rate = 0.5;
  double stripe_scale = 1.0;
  int64_t num_coils = 1;
  std::filesystem::path out;
};
/// Writes the dataset and its manifest.json; the returned context is finished.
RunContext cmd_generate(const GenerateOptions& options);

struct TrainOutcome {
  std::filesystem::path checkpoint_dir;
  double best_val_metric = 0.0;
  std::vector<EpochLog> log;
};
/// Runs the configured stage(s); returns the final checkpoint location.
TrainOutcome cmd_train(const Config& config, const std::filesystem::path& out, RunContext* context = nullptr);

struct EvalCommandOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path dataset;
  std::optional<Task> task;
  std::string split = "test";
  std::optional<std::filesystem::path> compare_to;
  std::map<std::string, std::string> tags;
  uint64_t noise_seed = 1234;
  std::filesystem::path out;
};
/// Writes per_sample.csv, summary.json and, for classification, confusion.csv.
MetricReport cmd_eval(const EvalCommandOptions& options, RunContext* context = nullptr);

struct PsfCommandOptions {
  std::vector<std::filesystem::path> inputs;  // mask .pgm files or checkpoint directories
  std::vector<Direction> directions{Direction::Vertical, Direction::Horizontal};
  std::filesystem::path out;
};
/// FWHM table per input and direction; relative improvement table for two inputs.
nlohmann::ordered_json cmd_psf_report(const PsfCommandOptions& options, RunContext* context = nullptr);

/// Ablation runs selected by config.ablation.kind; returns the cell summaries.
std::vector<GridCell> cmd_ablation_grid(const Config& config, const std::filesystem::path& out,
                                        RunContext* context = nullptr);

}  // namespace taskmri
