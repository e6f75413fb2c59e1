#include "taskmri/config.hpp"

#include <fstream>
#include <set>

#include "taskmri/errors.hpp"

namespace taskmri {

using json = nlohmann::json;

MaskKind parse_mask_kind(const std::string& name) {
  if (name == "learned") return MaskKind::Learned;
  if (name == "poisson_disc") return MaskKind::PoissonDisc;
  if (name == "lowpass") return MaskKind::LowPass;
  throw Error(ErrorKind::Config, "unknown mask kind '" + name + "'");
}

std::string to_string(MaskKind kind) {
  switch (kind) {
    case MaskKind::Learned: return "learned";
    case MaskKind::PoissonDisc: return "poisson_disc";
    case MaskKind::LowPass: return "lowpass";
  }
  return "unknown";
}

Stage parse_stage(const std::string& name) {
  if (name == "pretrain") return Stage::Pretrain;
  if (name == "finetune") return Stage::Finetune;
  if (name == "two_stage") return Stage::TwoStage;
  throw Error(ErrorKind::Config, "unknown stage '" + name + "'");
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::Pretrain: return "pretrain";
    case Stage::Finetune: return "finetune";
    case Stage::TwoStage: return "two_stage";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (patience < 1) throw Error(ErrorKind::Config, "training.patience must be >= 1");
  if (batch_size < 1) throw Error(ErrorKind::Config, "training.batch_size must be >= 1");
  if (max_epochs < 0) throw Error(ErrorKind::Config, "training.max_epochs must be >= 0");
  if (finetune_max_epochs && *finetune_max_epochs < 0) {
    throw Error(ErrorKind::Config, "training.finetune_max_epochs must be >= 0");
  }
  if (!(learning_rate > 0.0) || (finetune_learning_rate && !(*finetune_learning_rate > 0.0))) {
    throw Error(ErrorKind::Config, "training learning rates must be positive");
  }
  if (grad_clip < 0.0) throw Error(ErrorKind::Config, "training.grad_clip must be >= 0");
}

namespace {

// Walks one JSON object, recording which keys were consumed so leftovers can
// be reported with their full path.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(ErrorKind::Config, where() + " must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorKind::Config, field(key) + " has the wrong type");
    }
  }

  template <typename T>
  void read(const char* key, std::optional<T>& out) {
    if (!j_.contains(key) || j_.at(key).is_null()) {
      if (j_.contains(key)) used_.insert(key);
      return;
    }
    T value{};
    read(key, value);
    out = value;
  }

  template <typename Parse, typename T>
  void read_enum(const char* key, T& out, Parse parse) {
    if (!j_.contains(key)) return;
    std::string name;
    read(key, name);
    try {
      out = parse(name);
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, field(key) + ": " + e.what());
    }
  }

  std::optional<Section> child(const char* key) {
    if (!j_.contains(key)) return std::nullopt;
    used_.insert(key);
    return Section(j_.at(key), field(key));
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) throw Error(ErrorKind::Config, "unknown key " + field(key));
    }
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config root" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void require_positive(const Section& s, const char* key, int64_t value) {
  if (value < 1) throw Error(ErrorKind::Config, s.field(key) + " must be >= 1");
}

}  // namespace

Config Config::from_json(const json& j) {
  Config c;
  Section root(j, "");
  root.read("seed", c.seed);
  std::string task_name = to_string(c.training.task);
  root.read("task", task_name);
  try {
    c.training.task = parse_task(task_name);
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, std::string("task: ") + e.what());
  }

  if (auto s = root.child("datasets")) {
    s->read("path", c.datasets.path);
    s->read("ood_path", c.datasets.ood_path);
    s->finish();
  }
  if (auto s = root.child("forward_model")) {
    s->read("noise_sigma", c.forward_model.noise_sigma);
    if (c.forward_model.noise_sigma < 0.0) throw Error(ErrorKind::Config, "forward_model.noise_sigma must be >= 0");
    s->finish();
  }
  if (auto s = root.child("sampler")) {
    s->read_enum("kind", c.sampler.kind, parse_mask_kind);
    s->read("acceleration", c.sampler.acceleration);
    s->read("frozen", c.sampler.frozen);
    std::string finetune_mask = c.sampler.finetune_bernoulli ? "bernoulli" : "binarized";
    s->read("finetune_mask", finetune_mask);
    if (finetune_mask != "bernoulli" && finetune_mask != "binarized") {
      throw Error(ErrorKind::Config, "sampler.finetune_mask must be 'bernoulli' or 'binarized'");
    }
    c.sampler.finetune_bernoulli = finetune_mask == "bernoulli";
    if (!(c.sampler.acceleration >= 1.0)) throw Error(ErrorKind::Config, "sampler.acceleration must be >= 1");
    s->finish();
  }
  if (auto s = root.child("retriever")) {
    auto& n = c.retriever.network;
    s->read("enabled", c.retriever.enabled);
    s->read("frozen", c.retriever.frozen);
    s->read("num_cascades", n.num_cascades);
    s->read("base_channels", n.base_channels);
    s->read("pool_levels", n.pool_levels);
    s->read("sens_base_channels", n.sens_base_channels);
    s->read("sens_pool_levels", n.sens_pool_levels);
    s->read("eta_init", n.eta_init);
    require_positive(*s, "num_cascades", n.num_cascades);
    require_positive(*s, "base_channels", n.base_channels);
    require_positive(*s, "sens_base_channels", n.sens_base_channels);
    s->finish();
  }
  if (auto s = root.child("predictors")) {
    if (auto seg = s->child("segmentation")) {
      seg->read("num_classes", c.predictors.segmentation.num_classes);
      seg->read("base_channels", c.predictors.segmentation.base_channels);
      seg->read("pool_levels", c.predictors.segmentation.pool_levels);
      require_positive(*seg, "base_channels", c.predictors.segmentation.base_channels);
      if (c.predictors.segmentation.num_classes < 2) {
        throw Error(ErrorKind::Config, "predictors.segmentation.num_classes must be >= 2");
      }
      seg->finish();
    }
    if (auto cls = s->child("classification")) {
      cls->read("base_channels", c.predictors.classification.base_channels);
      cls->read("blocks_per_stage", c.predictors.classification.blocks_per_stage);
      require_positive(*cls, "base_channels", c.predictors.classification.base_channels);
      if (c.predictors.classification.blocks_per_stage.empty()) {
        throw Error(ErrorKind::Config, "predictors.classification.blocks_per_stage must not be empty");
      }
      cls->finish();
    }
    s->finish();
  }
  if (auto s = root.child("training")) {
    auto& t = c.training;
    s->read_enum("stage", t.stage, parse_stage);
    s->read("learning_rate", t.learning_rate);
    s->read("finetune_learning_rate", t.finetune_learning_rate);
    s->read("patience", t.patience);
    s->read("max_epochs", t.max_epochs);
    s->read("finetune_max_epochs", t.finetune_max_epochs);
    s->read("batch_size", t.batch_size);
    s->read("grad_clip", t.grad_clip);
    s->read("lr_sweep", t.lr_sweep);
    s->read("pretrain_checkpoint", t.pretrain_checkpoint);
    s->finish();
  }
  if (auto s = root.child("ablation")) {
    s->read_enum("kind", c.ablation.kind, [](const std::string& name) {
      if (name == "codesign") return AblationKind::CoDesign;
      if (name == "pretrain") return AblationKind::Pretrain;
      throw Error(ErrorKind::Config, "unknown ablation kind '" + name + "'");
    });
    s->read("pretrain_epochs", c.ablation.pretrain_epochs);
    s->finish();
  }
  if (auto s = root.child("evaluation")) {
    s->read("split", c.evaluation.split);
    s->read("noise_seed", c.evaluation.noise_seed);
    try {
      parse_split(c.evaluation.split);
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, std::string("evaluation.split: ") + e.what());
    }
    s->finish();
  }
  root.finish();
  c.training.validate();
  return c;
}

Config Config::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorKind::Io, "cannot read config " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Config, file.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::ordered_json Config::to_json() const {
  nlohmann::ordered_json j;
  j["task"] = to_string(training.task);
  j["seed"] = seed;
  j["datasets"] = {{"path", datasets.path}, {"ood_path", datasets.ood_path}};
  j["forward_model"] = {{"noise_sigma", forward_model.noise_sigma}};
  j["sampler"] = {{"kind", to_string(sampler.kind)},
                  {"acceleration", sampler.acceleration},
                  {"frozen", sampler.frozen},
                  {"finetune_mask", sampler.finetune_bernoulli ? "bernoulli" : "binarized"}};
  const auto& n = retriever.network;
  j["retriever"] = {{"enabled", retriever.enabled},
                    {"frozen", retriever.frozen},
                    {"num_cascades", n.num_cascades},
                    {"base_channels", n.base_channels},
                    {"pool_levels", n.pool_levels},
                    {"sens_base_channels", n.sens_base_channels},
                    {"sens_pool_levels", n.sens_pool_levels},
                    {"eta_init", n.eta_init}};
  j["predictors"]["segmentation"] = {{"num_classes", predictors.segmentation.num_classes},
                                     {"base_channels", predictors.segmentation.base_channels},
                                     {"pool_levels", predictors.segmentation.pool_levels}};
  j["predictors"]["classification"] = {{"base_channels", predictors.classification.base_channels},
                                       {"blocks_per_stage", predictors.classification.blocks_per_stage}};
  j["training"] = {{"stage", to_string(training.stage)},
                   {"learning_rate", training.learning_rate},
                   {"patience", training.patience},
                   {"max_epochs", training.max_epochs},
                   {"batch_size", training.batch_size},
                   {"grad_clip", training.grad_clip},
                   {"lr_sweep", training.lr_sweep},
                   {"pretrain_checkpoint", training.pretrain_checkpoint}};
  if (training.finetune_learning_rate) j["training"]["finetune_learning_rate"] = *training.finetune_learning_rate;
  if (training.finetune_max_epochs) j["training"]["finetune_max_epochs"] = *training.finetune_max_epochs;
  j["ablation"] = {{"kind", ablation.kind == AblationKind::CoDesign ? "codesign" : "pretrain"},
                   {"pretrain_epochs", ablation.pretrain_epochs}};
  j["evaluation"] = {{"split", evaluation.split}, {"noise_seed", evaluation.noise_seed}};
  return j;
}

}  // namespace taskmri
