#include "taskmri/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <set>

#include "taskmri/errors.hpp"

namespace taskmri {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "checkpoint payloads assume a little-endian host");

StateDict collect_state(const torch::nn::Module& module, const std::string& prefix) {
  StateDict out;
  for (const auto& item : module.named_parameters(true)) {
    out.emplace_back(prefix + "." + item.key(), item.value().detach().clone());
  }
  for (const auto& item : module.named_buffers(true)) {
    out.emplace_back(prefix + "." + item.key(), item.value().detach().clone());
  }
  return out;
}

const torch::Tensor* find_tensor(const StateDict& state, const std::string& name) {
  for (const auto& [key, value] : state) {
    if (key == name) return &value;
  }
  return nullptr;
}

void restore_state(torch::nn::Module& module, const std::string& prefix, const StateDict& state) {
  const std::string lead = prefix + ".";
  std::set<std::string> consumed;
  torch::NoGradGuard guard;
  auto assign = [&](const std::string& key, torch::Tensor& target) {
    const auto name = lead + key;
    const auto* source = find_tensor(state, name);
    if (!source) throw Error(ErrorKind::Integrity, "checkpoint is missing " + name);
    if (source->sizes() != target.sizes()) {
      throw Error(ErrorKind::Integrity, "checkpoint tensor " + name + " has a mismatched shape");
    }
    target.copy_(*source);
    consumed.insert(name);
  };
  for (auto& item : module.named_parameters(true)) assign(item.key(), item.value());
  for (auto& item : module.named_buffers(true)) assign(item.key(), item.value());
  for (const auto& [key, value] : state) {
    if (key.rfind(lead, 0) == 0 && !consumed.count(key)) {
      throw Error(ErrorKind::Integrity, "checkpoint has unexpected tensor " + key);
    }
  }
}

std::vector<fs::path> save_checkpoint(const fs::path& dir, const Checkpoint& checkpoint) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  json header;
  header["format_version"] = 1;
  header["task"] = checkpoint.meta.task;
  header["stage"] = checkpoint.meta.stage;
  header["epoch"] = checkpoint.meta.epoch;
  header["metric_name"] = checkpoint.meta.metric_name;
  // JSON cannot carry non-finite doubles
  header["val_metric"] = std::isfinite(checkpoint.meta.val_metric) ? json(checkpoint.meta.val_metric) : json(nullptr);
  header["config"] = checkpoint.meta.config;
  header["dtype"] = "float32";
  header["byte_order"] = "little";
  json tensors = json::array();
  std::ofstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw Error(ErrorKind::Io, "cannot write " + (dir / "params.bin").string());
  uint64_t offset = 0;
  for (const auto& [name, tensor] : checkpoint.state) {
    auto data = tensor.detach().to(torch::kCPU);
    const bool integral = !data.is_floating_point();
    data = data.to(torch::kFloat32).contiguous();
    const auto nbytes = static_cast<uint64_t>(data.numel()) * sizeof(float);
    bin.write(reinterpret_cast<const char*>(data.data_ptr<float>()), static_cast<std::streamsize>(nbytes));
    tensors.push_back({{"name", name},
                       {"shape", tensor.sizes().vec()},
                       {"offset", offset},
                       {"nbytes", nbytes},
                       {"integral", integral}});
    offset += nbytes;
  }
  if (!bin) throw Error(ErrorKind::Io, "short write to " + (dir / "params.bin").string());
  header["tensors"] = tensors;
  header["params_nbytes"] = offset;
  std::ofstream out(dir / "header.json");
  if (!out) throw Error(ErrorKind::Io, "cannot write " + (dir / "header.json").string());
  out << header.dump(2) << '\n';
  return {dir / "header.json", dir / "params.bin"};
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "header.json");
  if (!in) throw Error(ErrorKind::Io, "cannot read checkpoint header in " + dir.string());
  Checkpoint ck;
  json header;
  try {
    header = json::parse(in);
    ck.meta.task = header.at("task").get<std::string>();
    ck.meta.stage = header.at("stage").get<std::string>();
    ck.meta.epoch = header.at("epoch").get<int64_t>();
    ck.meta.metric_name = header.at("metric_name").get<std::string>();
    const auto& v = header.at("val_metric");
    ck.meta.val_metric = v.is_null() ? std::nan("") : v.get<double>();
    ck.meta.config = header.at("config");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, (dir / "header.json").string() + ": " + e.what());
  }
  std::ifstream bin(dir / "params.bin", std::ios::binary | std::ios::ate);
  if (!bin) throw Error(ErrorKind::Io, "cannot read " + (dir / "params.bin").string());
  const auto file_size = static_cast<uint64_t>(bin.tellg());
  try {
    if (header.at("params_nbytes").get<uint64_t>() != file_size) {
      throw Error(ErrorKind::Integrity, "params.bin size disagrees with its header in " + dir.string());
    }
    for (const auto& t : header.at("tensors")) {
      const auto shape = t.at("shape").get<std::vector<int64_t>>();
      const auto offset = t.at("offset").get<uint64_t>();
      const auto nbytes = t.at("nbytes").get<uint64_t>();
      int64_t numel = 1;
      for (auto d : shape) numel *= d;
      if (nbytes != static_cast<uint64_t>(numel) * sizeof(float) || offset + nbytes > file_size) {
        throw Error(ErrorKind::Integrity, "tensor " + t.at("name").get<std::string>() + " has an inconsistent extent");
      }
      auto tensor = torch::empty(shape, torch::kFloat32);
      bin.seekg(static_cast<std::streamoff>(offset));
      bin.read(reinterpret_cast<char*>(tensor.data_ptr<float>()), static_cast<std::streamsize>(nbytes));
      if (t.value("integral", false)) tensor = tensor.to(torch::kInt64);
      ck.state.emplace_back(t.at("name").get<std::string>(), tensor);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, (dir / "header.json").string() + ": " + e.what());
  }
  return ck;
}

}  // namespace taskmri
