#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace taskmri {

/// Ordered (name, tensor) list covering parameters and buffers.
using StateDict = std::vector<std::pair<std::string, torch::Tensor>>;

/// Parameters then buffers of `module`, names prefixed with `prefix` + ".".
/// Tensors are detached deep copies.
StateDict collect_state(const torch::nn::Module& module, const std::string& prefix);

/// Copies every `prefix.`-entry of `state` into `module`. Missing or extra
/// entries and shape mismatches raise an Integrity error.
void restore_state(torch::nn::Module& module, const std::string& prefix, const StateDict& state);

const torch::Tensor* find_tensor(const StateDict& state, const std::string& name);

struct CheckpointMeta {
  std::string task;
  std::string stage;  // "pretrain" or "finetune"
  int64_t epoch = 0;
  std::string metric_name;
  double val_metric = 0.0;
  nlohmann::ordered_json config;
};

struct Checkpoint {
  CheckpointMeta meta;
  StateDict state;
};

/// Writes <dir>/header.json and <dir>/params.bin (raw little-endian float32,
/// tensors back to back in header order). Returns the files written.
std::vector<std::filesystem::path> save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);

/// Reads a checkpoint written by save_checkpoint; sizes and offsets are checked.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace taskmri
