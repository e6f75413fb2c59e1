#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "taskmri/forward_model.hpp"
#include "taskmri/metrics.hpp"

namespace taskmri {

enum class Task { FullFov, RoiRecon, Segmentation, Classification };

Task parse_task(const std::string& name);
std::string to_string(Task task);

/// One 2D slice: fully sampled k-space plus the labels its task needs.
struct Sample {
  std::string sample_id;
  std::string patient_id;
  /// Fully sampled, noise-free complex k-space [C, H, W] (C = 1 for single coil).
  torch::Tensor kspace;
  /// Real, nonnegative [H, W]: RSS of the inverse transform of `kspace`.
  torch::Tensor target;
  std::optional<RoiBox> roi;
  /// One-hot [c, H, W] segmentation, background is class 0.
  std::optional<torch::Tensor> seg_map;
  std::optional<int> cls_label;

  int64_t num_coils() const { return kspace.size(0); }
  int64_t height() const { return kspace.size(1); }
  int64_t width() const { return kspace.size(2); }
};

struct Dataset {
  Task task = Task::FullFov;
  int64_t height = 0;
  int64_t width = 0;
  int64_t num_coils = 1;
  int64_t num_classes = 0;  // segmentation only
  std::vector<Sample> samples;

  size_t size() const { return samples.size(); }
  /// Throws Schema when a sample lacks the labels `task` requires.
  void validate_labels(Task for_task) const;
  /// Keeps only the labels `for_task` uses and retags the dataset.
  Dataset for_task(Task for_task) const;
};

/// Patient-level split; ids are patient ids.
struct SplitManifest {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;

  /// Throws Integrity when a patient appears in more than one split.
  void validate() const;
  /// Shuffles unique patient ids with `seed` and cuts them 60/20/20.
  static SplitManifest generate(const Dataset& dataset, uint64_t seed, double train_fraction = 0.6,
                                double val_fraction = 0.2);

  enum class Part { Train, Val, Test };
  /// Sample indices of `dataset` in the given split, in dataset order.
  std::vector<size_t> indices(const Dataset& dataset, Part part) const;
};

SplitManifest::Part parse_split(const std::string& name);

/// Stripe and coil options for the anisotropic (ROI) phantoms.
struct AnisotropicOptions {
  /// Multiplies the stripe half-period; 2.0 gives the out-of-distribution set.
  double stripe_thickness_scale = 1.0;
  int64_t num_coils = 1;
  double coil_smoothness = 0.35;
  int64_t slices_per_patient = 2;
};

/// Smooth, horizontally elongated ellipses plus thin horizontal stripes
/// inside a per-sample ROI box. Spectral energy concentrates on the vertical
/// k-axis.
Dataset make_anisotropic_phantoms(int64_t count, int64_t height, int64_t width, uint64_t seed,
                                  const AnisotropicOptions& options = {});

/// Nested ellipses, one class per ring; class intensities occupy disjoint
/// ranges so thresholds separate them.
Dataset make_seg_phantoms(int64_t count, int64_t height, int64_t width, int64_t num_classes, uint64_t seed);

/// Background phantoms below kClsBackgroundCeiling; positives carry a small
/// bright blob whose peak exceeds it.
Dataset make_cls_phantoms(int64_t count, int64_t height, int64_t width, double lesion_rate, uint64_t seed);
inline constexpr double kClsBackgroundCeiling = 0.7;

/// Threshold boundaries between classes used by make_seg_phantoms.
std::vector<double> seg_class_thresholds(int64_t num_classes);

/// Builds a sample from a real image (and optional coil maps); k-space is
/// fft2c(S_i x) and the target its RSS reconstruction.
Sample make_sample(std::string sample_id, std::string patient_id, const torch::Tensor& image,
                   const std::vector<ComplexGrid>* sensitivities = nullptr);

// On-disk format: <root>/dataset.json, <root>/splits.json and one directory
// per sample with header.json plus little-endian float32 payloads
// (complex grids interleaved real/imag, row-major, coil-major).
void save_dataset(const Dataset& dataset, const SplitManifest& split, const std::filesystem::path& root);

struct LoadedDataset {
  Dataset dataset;
  SplitManifest split;
  /// False when splits.json was absent and the split was generated.
  bool split_from_disk = true;
};

/// Loads and validates a dataset for `task`. Missing labels raise Schema
/// naming the sample; overlapping splits raise Integrity.
LoadedDataset load_dataset(const std::filesystem::path& root, Task task);
/// Loads with the task recorded on disk.
LoadedDataset load_dataset(const std::filesystem::path& root);

void write_split(const SplitManifest& split, const std::filesystem::path& file);
SplitManifest read_split(const std::filesystem::path& file);

// Raw float32 helpers shared by the checkpoint and mask formats.
void write_f32(const std::filesystem::path& file, const torch::Tensor& t);
torch::Tensor read_f32(const std::filesystem::path& file, std::vector<int64_t> shape);

}  // namespace taskmri
