#include "taskmri/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "taskmri/log.hpp"

#include "taskmri/errors.hpp"
#include "taskmri/forward_model.hpp"
#include "taskmri/random.hpp"

namespace taskmri {

Batch make_batch(const Dataset& dataset, const std::vector<size_t>& indices) {
  Batch b;
  std::vector<torch::Tensor> k, t, seg, labels;
  for (auto i : indices) {
    const auto& s = dataset.samples.at(i);
    b.sample_ids.push_back(s.sample_id);
    k.push_back(s.kspace);
    t.push_back(s.target);
    if (s.roi) b.rois.push_back(*s.roi);
    if (s.seg_map) seg.push_back(*s.seg_map);
    if (s.cls_label) labels.push_back(torch::tensor(int64_t{*s.cls_label}));
  }
  b.kspace = torch::stack(k);
  b.target = torch::stack(t);
  if (!seg.empty()) b.seg_maps = torch::stack(seg);
  if (!labels.empty()) b.labels = torch::stack(labels);
  return b;
}

int64_t budget_for(int64_t height, int64_t width, double acceleration) {
  return std::llround(static_cast<double>(height * width) / acceleration);
}

Pipeline::Pipeline(const Config& config, int64_t height, int64_t width, int64_t num_coils)
    : config_(config), height_(height), width_(width), num_coils_(num_coils) {
  budget_ = budget_for(height, width, config.sampler.acceleration);
  acs_ = AcsRegion::for_budget(budget_);
  switch (config.sampler.kind) {
    case MaskKind::Learned:
      sampler_ = Sampler(height, width, budget_, derive_seed(config.seed, "sampler"), acs_);
      break;
    case MaskKind::PoissonDisc:
      fixed_mask_ = make_poisson_disc_mask(height, width, budget_, acs_, derive_seed(config.seed, "poisson")).values;
      break;
    case MaskKind::LowPass:
      fixed_mask_ = make_lowpass_mask(height, width, budget_).values;
      break;
  }
  if (config.retriever.enabled) {
    torch::manual_seed(derive_seed(config.seed, "retriever"));
    retriever_ = Retriever(config.retriever.network, num_coils > 1);
  }
}

void Pipeline::attach_predictor(Task task) {
  predictor_task_.reset();
  seg_ = nullptr;
  cls_ = nullptr;
  torch::manual_seed(derive_seed(config_.seed, "predictor"));
  if (task == Task::Segmentation) {
    seg_ = SegPredictor(config_.predictors.segmentation);
    predictor_task_ = task;
  } else if (task == Task::Classification) {
    cls_ = ClsPredictor(config_.predictors.classification);
    predictor_task_ = task;
  }
}

SamplingMask Pipeline::eval_mask() const {
  if (sampler_) return sampler_->binarize_eval_mask();
  return {fixed_mask_, true};
}

torch::Tensor Pipeline::training_mask(torch::Generator& generator, bool sampler_trainable, bool bernoulli) const {
  if (!sampler_ || !sampler_trainable) return eval_mask().values;
  if (bernoulli) return sampler_->relaxed_training_mask(generator);
  return straight_through(sampler_->binarize_eval_mask().values, sampler_->probabilities());
}

Pipeline::Output Pipeline::forward(const torch::Tensor& y, const torch::Tensor& mask) {
  Output out;
  out.recon = retriever_ ? retriever_->forward(y, mask, acs_) : zero_filled(y);
  if (seg_) out.scores = seg_->forward(out.recon);
  if (cls_) out.scores = cls_->forward(out.recon);
  return out;
}

std::vector<torch::Tensor> Pipeline::sampler_parameters() {
  return sampler_ ? sampler_->parameters() : std::vector<torch::Tensor>{};
}

std::vector<torch::Tensor> Pipeline::retriever_parameters() {
  return retriever_ ? retriever_->parameters() : std::vector<torch::Tensor>{};
}

std::vector<torch::Tensor> Pipeline::predictor_parameters() {
  if (seg_) return seg_->parameters();
  if (cls_) return cls_->parameters();
  return {};
}

void Pipeline::train(bool on) {
  if (sampler_) sampler_->train(on);
  if (retriever_) retriever_->train(on);
  if (seg_) seg_->train(on);
  if (cls_) cls_->train(on);
}

StateDict Pipeline::state() const {
  StateDict out;
  auto append = [&out](StateDict part) { std::move(part.begin(), part.end(), std::back_inserter(out)); };
  if (sampler_) append(collect_state(*sampler_, "sampler"));
  else out.emplace_back("mask.fixed", fixed_mask_.clone());
  if (retriever_) append(collect_state(*retriever_, "retriever"));
  if (seg_) append(collect_state(*seg_, "predictor"));
  if (cls_) append(collect_state(*cls_, "predictor"));
  return out;
}

void Pipeline::load_state(const StateDict& state) {
  if (sampler_) {
    restore_state(*sampler_, "sampler", state);
  } else {
    const auto* m = find_tensor(state, "mask.fixed");
    if (!m) throw Error(ErrorKind::Integrity, "checkpoint is missing mask.fixed");
    if (m->sizes() != fixed_mask_.sizes()) throw Error(ErrorKind::Integrity, "fixed mask has the wrong shape");
    fixed_mask_ = m->clone();
  }
  if (retriever_) restore_state(*retriever_, "retriever", state);
  if (seg_) restore_state(*seg_, "predictor", state);
  if (cls_) restore_state(*cls_, "predictor", state);
  const bool has_predictor_entries = std::any_of(state.begin(), state.end(), [](const auto& kv) {
    return kv.first.rfind("predictor.", 0) == 0;
  });
  if (has_predictor_entries && !seg_ && !cls_) {
    throw Error(ErrorKind::Integrity, "checkpoint carries predictor weights but no predictor is attached");
  }
}

Checkpoint make_checkpoint(const Pipeline& pipeline, const std::string& stage, int64_t epoch, Task task,
                           double val_metric) {
  Checkpoint ck;
  ck.meta.task = to_string(task);
  ck.meta.stage = stage;
  ck.meta.epoch = epoch;
  ck.meta.metric_name = metric_name(stage == "pretrain" ? Task::FullFov : task);
  ck.meta.val_metric = val_metric;
  ck.meta.config = pipeline.config().to_json();
  ck.state = pipeline.state();
  return ck;
}

Pipeline pipeline_from_checkpoint(const Checkpoint& checkpoint, int64_t height, int64_t width, int64_t num_coils) {
  Config config;
  try {
    config = Config::from_json(nlohmann::json::parse(checkpoint.meta.config.dump()));
  } catch (const Error& e) {
    throw Error(ErrorKind::Integrity, std::string("checkpoint config snapshot is invalid: ") + e.what());
  }
  Pipeline p(config, height, width, num_coils);
  const bool has_predictor = std::any_of(checkpoint.state.begin(), checkpoint.state.end(), [](const auto& kv) {
    return kv.first.rfind("predictor.", 0) == 0;
  });
  if (has_predictor) p.attach_predictor(parse_task(checkpoint.meta.task));
  p.load_state(checkpoint.state);
  return p;
}

std::string metric_name(Task task) {
  switch (task) {
    case Task::FullFov: return "psnr";
    case Task::RoiRecon: return "local_psnr";
    case Task::Segmentation: return "dice";
    case Task::Classification: return "accuracy";
  }
  return "unknown";
}

torch::Tensor task_loss(Task task, const Pipeline::Output& out, const Batch& batch) {
  switch (task) {
    case Task::FullFov:
      return -psnr_batch(out.recon, batch.target).mean();
    case Task::RoiRecon:
      return -local_psnr_batch(out.recon, batch.target, batch.rois).mean();
    case Task::Segmentation:
      if (!out.scores.defined()) throw Error(ErrorKind::Contract, "segmentation loss needs a segmentation predictor");
      return 1.0 - dice_scores(torch::softmax(out.scores, 1), batch.seg_maps).mean();
    case Task::Classification:
      if (!out.scores.defined()) throw Error(ErrorKind::Contract, "classification loss needs a classifier");
      return bce_loss_batch(out.scores, batch.labels).mean();
  }
  throw Error(ErrorKind::Contract, "unknown task");
}

namespace {

torch::Tensor measure_samples(const Batch& batch, const torch::Tensor& mask, double sigma, uint64_t noise_seed) {
  std::vector<torch::Tensor> ys;
  for (int64_t i = 0; i < batch.kspace.size(0); ++i) {
    auto gen = make_generator(derive_seed(noise_seed, batch.sample_ids[static_cast<size_t>(i)]));
    ys.push_back(measure(batch.kspace[i], mask, sigma, gen));
  }
  return torch::stack(ys);
}

}  // namespace

MetricReport evaluate(Pipeline& pipeline, const Dataset& dataset, const std::vector<size_t>& indices, Task task,
                      const EvalOptions& options) {
  MetricReport report;
  report.task = to_string(task);
  switch (task) {
    case Task::FullFov: report.metric_names = {"psnr"}; break;
    case Task::RoiRecon: report.metric_names = {"local_psnr", "psnr"}; break;
    case Task::Segmentation: report.metric_names = {"dice"}; break;
    case Task::Classification: report.metric_names = {"prediction", "label", "p_lesion", "bce"}; break;
  }
  if ((task == Task::Segmentation || task == Task::Classification) && pipeline.predictor_task() != task) {
    throw Error(ErrorKind::Contract, "pipeline has no predictor for task " + to_string(task));
  }
  torch::NoGradGuard guard;
  pipeline.train(false);
  const auto mask = pipeline.eval_mask().values;
  const auto step = static_cast<size_t>(std::max<int64_t>(1, options.batch_size));
  for (size_t start = 0; start < indices.size(); start += step) {
    std::vector<size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                              indices.begin() + static_cast<std::ptrdiff_t>(std::min(indices.size(), start + step)));
    auto batch = make_batch(dataset, chunk);
    auto y = measure_samples(batch, mask, options.noise_sigma, options.noise_seed);
    auto out = pipeline.forward(y, mask);
    for (size_t i = 0; i < chunk.size(); ++i) {
      const auto ii = static_cast<int64_t>(i);
      const auto& sample = dataset.samples[chunk[i]];
      switch (task) {
        case Task::FullFov:
          report.add_row(sample.sample_id, {psnr(out.recon[ii], batch.target[ii])});
          break;
        case Task::RoiRecon:
          report.add_row(sample.sample_id, {local_psnr(out.recon[ii], batch.target[ii], *sample.roi),
                                            psnr(out.recon[ii], batch.target[ii])});
          break;
        case Task::Segmentation:
          report.add_row(sample.sample_id, {dice_score(binarize_segmentation(out.scores[ii]), *sample.seg_map)});
          break;
        case Task::Classification: {
          auto logits = out.scores[ii];
          const auto prediction = logits.argmax().item<int64_t>();
          const double p = torch::softmax(logits.to(torch::kFloat64), 0)[1].item<double>();
          report.add_row(sample.sample_id, {static_cast<double>(prediction), static_cast<double>(*sample.cls_label), p,
                                            bce_loss(logits, *sample.cls_label)});
          break;
        }
      }
    }
  }
  return report;
}

double primary_metric(const MetricReport& report, Task task) {
  if (task == Task::Classification) {
    const auto pred = report.column("prediction");
    const auto label = report.column("label");
    std::vector<int> p(pred.begin(), pred.end()), l(label.begin(), label.end());
    return cls_metrics(p, l).accuracy;
  }
  return report.aggregate(metric_name(task));
}

EarlyStopping::EarlyStopping(int64_t patience) : patience_(patience) {
  if (patience < 1) throw Error(ErrorKind::Config, "patience must be >= 1");
}

bool EarlyStopping::observe(int64_t epoch, double metric) {
  if (std::isnan(metric) || !(metric > best_)) return false;
  best_ = metric;
  best_epoch_ = epoch;
  return true;
}

bool EarlyStopping::should_stop(int64_t epoch) const { return best_epoch_ >= 0 && epoch - best_epoch_ >= patience_; }

namespace {

// Enables gradients only on the groups being trained; restores on scope exit.
class GradScope {
 public:
  GradScope(Pipeline& p, const StageOptions& o) {
    set(p.sampler_parameters(), o.train_sampler);
    set(p.retriever_parameters(), o.train_retriever);
    set(p.predictor_parameters(), o.train_predictor);
  }
  ~GradScope() {
    for (auto& t : touched_) t.requires_grad_(true);
  }
  const std::vector<torch::Tensor>& trainable() const { return trainable_; }

 private:
  void set(std::vector<torch::Tensor> params, bool on) {
    for (auto& t : params) {
      t.requires_grad_(on);
      touched_.push_back(t);
      if (on) trainable_.push_back(t);
    }
  }
  std::vector<torch::Tensor> touched_;
  std::vector<torch::Tensor> trainable_;
};

}  // namespace

StageResult run_stage(Pipeline& pipeline, const Dataset& dataset, const SplitManifest& split,
                      const StageOptions& options) {
  const auto train_idx = split.indices(dataset, SplitManifest::Part::Train);
  const auto val_idx = split.indices(dataset, SplitManifest::Part::Val);
  if (train_idx.empty() || val_idx.empty()) {
    throw Error(ErrorKind::InvalidInput, "training needs nonempty train and validation splits");
  }
  EvalOptions eval_opts{options.noise_sigma, options.val_noise_seed, 8};
  StageResult result;
  EarlyStopping stopper(options.patience);

  auto record = [&](int64_t epoch, double loss) {
    const double metric = primary_metric(evaluate(pipeline, dataset, val_idx, options.objective, eval_opts),
                                         options.objective);
    EpochLog entry{epoch, loss, metric, stopper.observe(epoch, metric)};
    if (entry.improved) {
      result.best_epoch = epoch;
      result.best_metric = metric;
      result.best_state = pipeline.state();
    }
    result.log.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);
    log::debug(options.name + " epoch " + std::to_string(epoch) + " loss " + std::to_string(loss) + " val " +
               metric_name(options.objective) + " " + std::to_string(metric));
  };

  record(0, std::numeric_limits<double>::quiet_NaN());
  if (result.best_state.empty()) {
    // a non-finite initial metric still leaves a state to return
    result.best_state = pipeline.state();
    result.best_metric = result.log.back().val_metric;
  }

  GradScope scope(pipeline, options);
  if (scope.trainable().empty() || options.max_epochs == 0) return result;
  torch::optim::Adam optimizer(scope.trainable(),
                               torch::optim::AdamOptions(options.learning_rate).betas({0.9, 0.999}));
  auto mask_gen = make_generator(derive_seed(options.seed, options.name + ":mask"));
  auto noise_gen = make_generator(derive_seed(options.seed, options.name + ":noise"));
  std::mt19937_64 order_rng(derive_seed(options.seed, options.name + ":order"));
  const auto bs = static_cast<size_t>(options.batch_size);

  for (int64_t epoch = 1; epoch <= options.max_epochs; ++epoch) {
    auto order = train_idx;
    std::shuffle(order.begin(), order.end(), order_rng);
    pipeline.train(true);
    double loss_sum = 0.0;
    int64_t steps = 0;
    try {
      for (size_t start = 0; start < order.size(); start += bs) {
        std::vector<size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(start),
                                  order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bs)));
        auto batch = make_batch(dataset, chunk);
        auto mask = pipeline.training_mask(mask_gen, options.train_sampler, options.bernoulli_masks);
        auto y = measure(batch.kspace, mask, options.noise_sigma, noise_gen);
        auto out = pipeline.forward(y, mask);
        auto loss = task_loss(options.objective, out, batch);
        const double value = loss.item<double>();
        if (!std::isfinite(value)) throw NumericalFailure(-1, "non-finite training loss");
        optimizer.zero_grad();
        loss.backward();
        if (options.grad_clip > 0.0) torch::nn::utils::clip_grad_norm_(scope.trainable(), options.grad_clip);
        optimizer.step();
        loss_sum += value;
        ++steps;
      }
    } catch (const NumericalFailure& e) {
      result.diverged = true;
      result.divergence_reason = e.what();
      log::warn(options.name + " diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      break;
    }
    record(epoch, loss_sum / static_cast<double>(std::max<int64_t>(1, steps)));
    if (stopper.should_stop(epoch)) break;
  }
  pipeline.load_state(result.best_state);
  pipeline.train(false);
  return result;
}

StageOptions pretrain_options(const Config& config) {
  StageOptions o;
  o.name = "pretrain";
  o.objective = Task::FullFov;
  o.learning_rate = config.training.learning_rate;
  o.max_epochs = config.training.max_epochs;
  o.patience = config.training.patience;
  o.batch_size = config.training.batch_size;
  o.grad_clip = config.training.grad_clip;
  o.train_sampler = !config.sampler.frozen;
  o.train_retriever = !config.retriever.frozen;
  o.train_predictor = false;
  o.noise_sigma = config.forward_model.noise_sigma;
  o.seed = config.seed;
  o.val_noise_seed = derive_seed(config.seed, "validation");
  return o;
}

StageOptions finetune_options(const Config& config) {
  auto o = pretrain_options(config);
  o.name = "finetune";
  o.objective = config.training.task;
  o.learning_rate = config.training.finetune_lr();
  o.max_epochs = config.training.finetune_epochs();
  o.train_predictor = true;
  o.bernoulli_masks = config.sampler.finetune_bernoulli;
  return o;
}

StageResult pretrain(Pipeline& pipeline, const Dataset& dataset, const SplitManifest& split, const Config& config,
                     std::function<void(const EpochLog&)> on_epoch) {
  auto o = pretrain_options(config);
  o.on_epoch = std::move(on_epoch);
  return run_stage(pipeline, dataset, split, o);
}

StageResult finetune(Pipeline& pipeline, bool pretrained, const Dataset& dataset, const SplitManifest& split,
                     const Config& config, std::function<void(const EpochLog&)> on_epoch) {
  const auto task = config.training.task;
  if (!pretrained && (task == Task::Segmentation || task == Task::Classification)) {
    throw Error(ErrorKind::StagedTraining,
                "finetune for " + to_string(task) + " requires a pretrain checkpoint (training.pretrain_checkpoint)");
  }
  pipeline.attach_predictor(task);
  auto o = finetune_options(config);
  o.on_epoch = std::move(on_epoch);
  return run_stage(pipeline, dataset, split, o);
}

namespace {

EvalOptions test_eval_options(const Config& config) {
  return {config.forward_model.noise_sigma, config.evaluation.noise_seed, 8};
}

}  // namespace

std::vector<GridCell> run_ablation_grid(const Dataset& dataset, const SplitManifest& split, const Config& config) {
  const auto task = config.training.task;
  const auto test_idx = split.indices(dataset, SplitManifest::Part::Test);
  std::vector<GridCell> cells;
  for (auto kind : {MaskKind::PoissonDisc, MaskKind::Learned}) {
    Config base = config;
    base.sampler.kind = kind;
    base.sampler.frozen = false;
    base.retriever.frozen = false;
    base.retriever.enabled = true;
    Pipeline pre(base, dataset.height, dataset.width, dataset.num_coils);
    auto pre_result = pretrain(pre, dataset, split, base);
    if (pre_result.diverged) throw NumericalFailure(-1, "pretraining diverged: " + pre_result.divergence_reason);
    const auto pretrained_state = pre.state();
    for (bool task_trained : {false, true}) {
      Config cell_cfg = base;
      cell_cfg.sampler.frozen = !task_trained;
      cell_cfg.retriever.frozen = !task_trained;
      Pipeline p(cell_cfg, dataset.height, dataset.width, dataset.num_coils);
      p.load_state(pretrained_state);
      auto ft = finetune(p, true, dataset, split, cell_cfg);
      if (ft.diverged) throw NumericalFailure(-1, "fine-tuning diverged: " + ft.divergence_reason);
      GridCell cell;
      cell.name = to_string(kind) + (task_trained ? "/finetuned" : "/frozen");
      cell.mask = kind;
      cell.task_trained = task_trained;
      cell.val_metric = ft.best_metric;
      cell.test_report = evaluate(p, dataset, test_idx, task, test_eval_options(config));
      cell.test_report.tags["cell"] = cell.name;
      cell.checkpoint = make_checkpoint(p, "finetune", ft.best_epoch, task, ft.best_metric);
      cell.pretrain_log = pre_result.log;
      cell.finetune_log = ft.log;
      cell.mask_used = p.eval_mask();
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::vector<GridCell> run_pretrain_study(const Dataset& dataset, const SplitManifest& split, const Config& config) {
  const auto task = config.training.task;
  if (task != Task::Segmentation && task != Task::Classification) {
    throw Error(ErrorKind::Config, "the pretrain study needs a segmentation or classification task");
  }
  const auto total = config.training.max_epochs;
  const auto pre_epochs = config.ablation.pretrain_epochs;
  if (pre_epochs < 1 || pre_epochs >= total) {
    throw Error(ErrorKind::Config, "ablation.pretrain_epochs must lie in [1, training.max_epochs)");
  }
  const auto test_idx = split.indices(dataset, SplitManifest::Part::Test);
  std::vector<GridCell> rows;
  auto finish = [&](const std::string& name, Pipeline& p, const StageResult& pre, const StageResult& ft) {
    if (ft.diverged) throw NumericalFailure(-1, name + " diverged: " + ft.divergence_reason);
    GridCell row;
    row.name = name;
    row.mask = config.sampler.kind;
    row.task_trained = true;
    row.val_metric = ft.best_metric;
    row.test_report = evaluate(p, dataset, test_idx, task, test_eval_options(config));
    row.test_report.tags["row"] = name;
    row.checkpoint = make_checkpoint(p, "finetune", ft.best_epoch, task, ft.best_metric);
    row.pretrain_log = pre.log;
    row.finetune_log = ft.log;
    row.mask_used = p.eval_mask();
    rows.push_back(std::move(row));
  };

  auto task_options = [&](const Config& c, int64_t epochs) {
    auto o = finetune_options(c);
    o.learning_rate = c.training.learning_rate;
    o.max_epochs = epochs;
    return o;
  };

  {
    Config c = config;
    c.retriever.enabled = false;
    Pipeline p(c, dataset.height, dataset.width, dataset.num_coils);
    p.attach_predictor(task);
    auto ft = run_stage(p, dataset, split, task_options(c, total));
    finish("predictor_only", p, {}, ft);
  }
  {
    Pipeline p(config, dataset.height, dataset.width, dataset.num_coils);
    p.attach_predictor(task);
    auto ft = run_stage(p, dataset, split, task_options(config, total));
    finish("vn_no_pretrain", p, {}, ft);
  }
  {
    Config c = config;
    c.training.max_epochs = pre_epochs;
    Pipeline p(c, dataset.height, dataset.width, dataset.num_coils);
    auto pre = pretrain(p, dataset, split, c);
    if (pre.diverged) throw NumericalFailure(-1, "pretraining diverged: " + pre.divergence_reason);
    c.training.finetune_max_epochs = total - pre_epochs;
    auto ft = finetune(p, true, dataset, split, c);
    finish("vn_pretrain", p, pre, ft);
  }
  return rows;
}

}  // namespace taskmri
