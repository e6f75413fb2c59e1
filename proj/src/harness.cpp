#include "taskmri/harness.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "taskmri/log.hpp"

#include "taskmri/checkpoint.hpp"
#include "taskmri/errors.hpp"
#include "taskmri/random.hpp"

#ifndef TASKMRI_SOURCE_REVISION
#define TASKMRI_SOURCE_REVISION "unknown"
#endif

namespace taskmri {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

fs::path resolve_output_dir(const std::string& out, const std::string& fallback) {
  fs::path p = out.empty() ? fs::path(fallback) : fs::path(out);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kRunRootEnv); root && *root) return fs::path(root) / p;
  return fs::current_path() / p;
}

std::string source_revision() { return TASKMRI_SOURCE_REVISION; }

RunContext::RunContext(std::string command, fs::path dir)
    : command_(std::move(command)), dir_(std::move(dir)), start_(std::chrono::steady_clock::now()) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create output directory " + dir_.string() + ": " + ec.message());
}

void RunContext::record(const fs::path& file) {
  const auto rel = file.is_absolute() ? fs::relative(file, dir_) : file;
  const auto s = rel.generic_string();
  if (std::find(artifacts_.begin(), artifacts_.end(), s) == artifacts_.end()) artifacts_.push_back(s);
}

void RunContext::record_all(const std::vector<fs::path>& files) {
  for (const auto& f : files) record(f);
}

fs::path RunContext::write_text(const std::string& relative, const std::string& content) {
  const auto path = dir_ / relative;
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
  record(path);
  return path;
}

fs::path RunContext::write_json(const std::string& relative, const ojson& j) {
  return write_text(relative, j.dump(2) + "\n");
}

fs::path RunContext::finish() {
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  record(dir_ / "manifest.json");
  ojson m;
  m["command"] = command_;
  m["source_revision"] = source_revision();
  m["config"] = config_;
  m["seeds"] = seeds_;
  m["artifacts"] = artifacts_;
  m["duration_seconds"] = seconds;
  const auto path = dir_ / "manifest.json";
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << m.dump(2) << '\n';
  return path;
}

void write_pgm(const fs::path& file, const torch::Tensor& image) {
  auto img = image.detach().to(torch::kFloat64).contiguous();
  if (img.dim() != 2) throw Error(ErrorKind::InvalidInput, "PGM output needs a 2D image");
  const double peak = img.max().item<double>();
  const double scale = peak > 0.0 ? 255.0 / peak : 0.0;
  const auto h = img.size(0), w = img.size(1);
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + file.string());
  out << "P5\n" << w << ' ' << h << "\n255\n";
  const double* v = img.data_ptr<double>();
  for (int64_t i = 0; i < h * w; ++i) {
    const auto byte = static_cast<unsigned char>(std::clamp(std::lround(std::max(v[i], 0.0) * scale), 0L, 255L));
    out.put(static_cast<char>(byte));
  }
  if (!out) throw Error(ErrorKind::Io, "short write to " + file.string());
}

SamplingMask read_mask_pgm(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + file.string());
  std::string magic;
  int64_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || w < 1 || h < 1 || maxval != 255) {
    throw Error(ErrorKind::Schema, file.string() + " is not an 8-bit binary PGM");
  }
  in.get();
  std::vector<unsigned char> bytes(static_cast<size_t>(w * h));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw Error(ErrorKind::Schema, file.string() + " is truncated");
  auto m = torch::zeros({h, w}, torch::kFloat32);
  auto* mv = m.data_ptr<float>();
  for (size_t i = 0; i < bytes.size(); ++i) mv[i] = bytes[i] > 0 ? 1.0F : 0.0F;
  return {m, true};
}

std::vector<fs::path> write_mask(const fs::path& stem, const SamplingMask& mask) {
  fs::create_directories(stem.parent_path());
  auto pgm = stem;
  pgm += ".pgm";
  auto f32 = stem;
  f32 += ".f32";
  write_pgm(pgm, mask.values);
  write_f32(f32, mask.values);
  return {pgm, f32};
}

CheckpointGeometry checkpoint_geometry(const Checkpoint& checkpoint) {
  CheckpointGeometry g;
  const torch::Tensor* grid = find_tensor(checkpoint.state, "sampler.q");
  if (!grid) grid = find_tensor(checkpoint.state, "mask.fixed");
  if (!grid || grid->dim() != 2) throw Error(ErrorKind::Integrity, "checkpoint carries no sampling grid");
  g.height = grid->size(0);
  g.width = grid->size(1);
  for (const auto& [name, t] : checkpoint.state) {
    if (name.rfind("retriever.sens.", 0) == 0) g.num_coils = 2;
  }
  return g;
}

std::vector<double> comparison_values(const MetricReport& report, Task task) {
  if (task == Task::Classification) {
    auto v = report.column("bce");
    for (auto& x : v) x = -x;
    return v;
  }
  return report.column(metric_name(task));
}

MetricReport::Comparison compare_reports(const MetricReport& candidate, const MetricReport& baseline, Task task,
                                         const std::string& baseline_name) {
  MetricReport::Comparison c;
  c.baseline = baseline_name;
  c.metric = task == Task::Classification ? "neg_bce" : metric_name(task);
  const auto cand = comparison_values(candidate, task);
  const auto base = comparison_values(baseline, task);
  std::map<std::string, double> base_by_id;
  for (size_t i = 0; i < baseline.rows.size(); ++i) base_by_id[baseline.rows[i].sample_id] = base[i];
  std::vector<double> a, b;
  for (size_t i = 0; i < candidate.rows.size(); ++i) {
    auto it = base_by_id.find(candidate.rows[i].sample_id);
    if (it == base_by_id.end()) throw Error(ErrorKind::Contract, "comparison reports cover different samples");
    if (!std::isfinite(cand[i]) || !std::isfinite(it->second)) continue;
    a.push_back(it->second);
    b.push_back(cand[i]);
  }
  try {
    const auto t = paired_ttest(a, b);
    c.p_value = t.p_value;
    c.t_statistic = t.t_statistic;
    c.fraction_improved = t.fraction_improved;
    c.degenerate = t.zero_variance;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::UndefinedStatistic) throw;
    // identical per-sample values: nothing improved and the statistic is undefined
    c.p_value = 1.0;
    c.t_statistic = 0.0;
    c.fraction_improved = 0.0;
    c.degenerate = true;
  }
  return c;
}

std::string confusion_matrix_csv(const MetricReport& report) {
  const auto pred = report.column("prediction");
  const auto label = report.column("label");
  int64_t counts[2][2] = {{0, 0}, {0, 0}};
  for (size_t i = 0; i < pred.size(); ++i) {
    counts[static_cast<int>(label[i])][static_cast<int>(pred[i])] += 1;
  }
  std::ostringstream os;
  os << "true\\predicted,0,1\n";
  os << "0," << counts[0][0] << ',' << counts[0][1] << '\n';
  os << "1," << counts[1][0] << ',' << counts[1][1] << '\n';
  return os.str();
}

std::string epoch_log_csv(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,train_loss,val_metric\n";
  for (const auto& e : log) os << e.epoch << ',' << e.train_loss << ',' << e.val_metric << '\n';
  return os.str();
}

RunContext cmd_generate(const GenerateOptions& o) {
  RunContext ctx("generate", o.out);
  Dataset ds;
  switch (o.task) {
    case Task::FullFov:
    case Task::RoiRecon: {
      AnisotropicOptions a;
      a.stripe_thickness_scale = o.stripe_scale;
      a.num_coils = o.num_coils;
      ds = make_anisotropic_phantoms(o.count, o.height, o.width, o.seed, a);
      ds.task = o.task;
      break;
    }
    case Task::Segmentation:
      ds = make_seg_phantoms(o.count, o.height, o.width, o.num_classes, o.seed);
      break;
    case Task::Classification:
      ds = make_cls_phantoms(o.count, o.height, o.width, o.lesion_rate, o.seed);
      break;
  }
  if (ds.task == Task::FullFov) {
    for (auto& s : ds.samples) s.roi.reset();
  }
  const auto split = SplitManifest::generate(ds, derive_seed(o.seed, "split"));
  save_dataset(ds, split, ctx.dir());
  ctx.record(ctx.dir() / "dataset.json");
  ctx.record(ctx.dir() / "splits.json");
  for (const auto& s : ds.samples) {
    const auto dir = ctx.dir() / "samples" / s.sample_id;
    ctx.record(dir / "header.json");
    ctx.record(dir / "kspace.f32");
    ctx.record(dir / "target.f32");
    if (s.seg_map) ctx.record(dir / "seg_map.f32");
  }
  ojson cfg;
  cfg["task"] = to_string(o.task);
  cfg["count"] = o.count;
  cfg["height"] = o.height;
  cfg["width"] = o.width;
  cfg["num_classes"] = o.num_classes;
  cfg["lesion_rate"] = o.lesion_rate;
  cfg["stripe_scale"] = o.stripe_scale;
  cfg["num_coils"] = o.num_coils;
  ctx.set_config(cfg);
  ctx.set_seed("seed", o.seed);
  ctx.finish();
  return ctx;
}

namespace {

void save_stage(RunContext& ctx, const std::string& stage, const Pipeline& pipeline, const StageResult& result,
                Task task) {
  const auto ck = make_checkpoint(pipeline, stage, result.best_epoch, task, result.best_metric);
  ctx.record_all(save_checkpoint(ctx.dir() / "checkpoints" / stage, ck));
  ctx.write_text("metrics_" + stage + ".csv", epoch_log_csv(result.log));
}

StageResult train_with_sweep(Pipeline& pipeline, const Config& config, bool finetune_stage, const Dataset& dataset,
                             const SplitManifest& split, bool pretrained, std::vector<ojson>& sweep_log) {
  auto run = [&](Pipeline& p, const Config& c) {
    return finetune_stage ? finetune(p, pretrained, dataset, split, c) : pretrain(p, dataset, split, c);
  };
  if (!config.training.lr_sweep) return run(pipeline, config);
  const auto initial = pipeline.state();
  std::optional<StageResult> best;
  StateDict best_pipeline_state;
  double best_lr = 0.0;
  for (double lr : {1e-2, 1e-3, 1e-4}) {
    Config c = config;
    if (finetune_stage) c.training.finetune_learning_rate = lr;
    else c.training.learning_rate = lr;
    pipeline.attach_predictor(Task::FullFov);  // drops any predictor from an earlier trial
    pipeline.load_state(initial);
    auto r = run(pipeline, c);
    sweep_log.push_back({{"stage", finetune_stage ? "finetune" : "pretrain"}, {"learning_rate", lr},
                         {"best_val_metric", r.best_metric}, {"best_epoch", r.best_epoch}});
    if (!best || r.best_metric > best->best_metric) {
      best = r;
      best_pipeline_state = pipeline.state();
      best_lr = lr;
    }
  }
  if (finetune_stage) pipeline.attach_predictor(config.training.task);
  pipeline.load_state(best_pipeline_state);
  log::info("learning-rate sweep picked " + std::to_string(best_lr));
  return *best;
}

}  // namespace

TrainOutcome cmd_train(const Config& config, const fs::path& out, RunContext* context) {
  std::optional<RunContext> owned;
  if (!context) owned.emplace("train", out);
  RunContext& ctx = context ? *context : *owned;
  ctx.set_config(config.to_json());
  ctx.set_seed("seed", config.seed);
  ctx.write_json("config.json", config.to_json());
  if (config.datasets.path.empty()) throw Error(ErrorKind::Config, "datasets.path is required for training");
  const auto task = config.training.task;
  auto loaded = load_dataset(config.datasets.path, task);
  const auto& ds = loaded.dataset;
  ctx.write_text("splits.json", [&] {
    ojson j{{"train", loaded.split.train}, {"val", loaded.split.val}, {"test", loaded.split.test}};
    return j.dump(2) + "\n";
  }());

  std::vector<ojson> sweep_log;
  TrainOutcome outcome;
  const auto stage = config.training.stage;
  std::optional<Pipeline> pipeline;
  bool pretrained = false;
  if (stage == Stage::Finetune && !config.training.pretrain_checkpoint.empty()) {
    auto ck = load_checkpoint(config.training.pretrain_checkpoint);
    if (ck.meta.stage != "pretrain") throw Error(ErrorKind::StagedTraining, "pretrain_checkpoint is not a pretrain checkpoint");
    const auto g = checkpoint_geometry(ck);
    if (g.height != ds.height || g.width != ds.width) {
      throw Error(ErrorKind::Contract, "pretrain checkpoint grid does not match the dataset");
    }
    pipeline.emplace(config, ds.height, ds.width, ds.num_coils);
    pipeline->load_state(ck.state);
    pretrained = true;
  } else {
    pipeline.emplace(config, ds.height, ds.width, ds.num_coils);
  }
  auto diverged = [&](const StageResult& r) {
    if (r.diverged) throw NumericalFailure(-1, r.divergence_reason + " (best checkpoint saved)");
  };

  if (stage == Stage::Pretrain || stage == Stage::TwoStage) {
    auto r = train_with_sweep(*pipeline, config, false, ds, loaded.split, false, sweep_log);
    save_stage(ctx, "pretrain", *pipeline, r, task);
    outcome = {ctx.dir() / "checkpoints" / "pretrain", r.best_metric, r.log};
    diverged(r);
    pretrained = true;
  }
  if (stage == Stage::Finetune || stage == Stage::TwoStage) {
    auto r = train_with_sweep(*pipeline, config, true, ds, loaded.split, pretrained, sweep_log);
    save_stage(ctx, "finetune", *pipeline, r, task);
    outcome = {ctx.dir() / "checkpoints" / "finetune", r.best_metric, r.log};
    diverged(r);
  }
  ctx.record_all(write_mask(ctx.dir() / "mask", pipeline->eval_mask()));
  if (!sweep_log.empty()) ctx.write_json("lr_sweep.json", ojson(sweep_log));
  ctx.write_json("summary.json", {{"task", to_string(task)},
                                  {"stage", to_string(stage)},
                                  {"best_val_metric", outcome.best_val_metric},
                                  {"checkpoint", fs::relative(outcome.checkpoint_dir, ctx.dir()).generic_string()}});
  if (owned) owned->finish();
  return outcome;
}

namespace {

std::string report_summary(const MetricReport& report, Task task) {
  auto j = ojson::parse(report.summary_json());
  j["primary_metric"] = metric_name(task);
  j["primary_value"] = primary_metric(report, task);
  if (task == Task::Classification) {
    const auto pred = report.column("prediction");
    const auto label = report.column("label");
    const auto m = cls_metrics(std::vector<int>(pred.begin(), pred.end()), std::vector<int>(label.begin(), label.end()));
    j["accuracy"] = m.accuracy;
    j["f1"] = m.f1;
    j["f1_degenerate"] = m.degenerate_f1;
  }
  return j.dump(2) + "\n";
}

}  // namespace

MetricReport cmd_eval(const EvalCommandOptions& o, RunContext* context) {
  std::optional<RunContext> owned;
  if (!context) owned.emplace("eval", o.out);
  RunContext& ctx = context ? *context : *owned;
  auto ck = load_checkpoint(o.checkpoint);
  const auto ck_task = parse_task(ck.meta.task);
  const Task task = o.task.value_or(ck_task);
  const bool needs_predictor = task == Task::Segmentation || task == Task::Classification;
  if (needs_predictor && ck_task != task) {
    throw Error(ErrorKind::Contract, "checkpoint was trained for " + ck.meta.task + ", not " + to_string(task));
  }
  auto loaded = load_dataset(o.dataset, task);
  const auto g = checkpoint_geometry(ck);
  if (g.height != loaded.dataset.height || g.width != loaded.dataset.width) {
    throw Error(ErrorKind::Contract, "checkpoint grid does not match the dataset");
  }
  auto pipeline = pipeline_from_checkpoint(ck, g.height, g.width, loaded.dataset.num_coils);
  if (needs_predictor && pipeline.predictor_task() != task) {
    throw Error(ErrorKind::Contract, "checkpoint carries no " + to_string(task) + " predictor");
  }
  const auto idx = loaded.split.indices(loaded.dataset, parse_split(o.split));
  EvalOptions eo;
  eo.noise_sigma = pipeline.config().forward_model.noise_sigma;
  eo.noise_seed = o.noise_seed;
  auto report = evaluate(pipeline, loaded.dataset, idx, task, eo);
  report.tags = o.tags;
  report.tags["split"] = o.split;
  report.tags["checkpoint_stage"] = ck.meta.stage;
  if (o.compare_to) {
    auto base_ck = load_checkpoint(*o.compare_to);
    const auto bg = checkpoint_geometry(base_ck);
    if (bg.height != g.height || bg.width != g.width) throw Error(ErrorKind::Contract, "baseline grid differs");
    auto base = pipeline_from_checkpoint(base_ck, bg.height, bg.width, loaded.dataset.num_coils);
    if (needs_predictor && base.predictor_task() != task) {
      throw Error(ErrorKind::Contract, "baseline checkpoint carries no " + to_string(task) + " predictor");
    }
    auto base_report = evaluate(base, loaded.dataset, idx, task, eo);
    report.comparison = compare_reports(report, base_report, task, o.compare_to->string());
    ctx.write_text("baseline_per_sample.csv", base_report.to_csv());
  }
  ctx.write_text("per_sample.csv", report.to_csv());
  ctx.write_text("summary.json", report_summary(report, task));
  if (task == Task::Classification) ctx.write_text("confusion.csv", confusion_matrix_csv(report));
  ctx.set_seed("noise_seed", o.noise_seed);
  ctx.set_config({{"checkpoint", o.checkpoint.string()}, {"dataset", o.dataset.string()}, {"task", to_string(task)},
                  {"split", o.split}, {"tags", o.tags}});
  if (owned) owned->finish();
  return report;
}

ojson cmd_psf_report(const PsfCommandOptions& o, RunContext* context) {
  std::optional<RunContext> owned;
  if (!context) owned.emplace("psf-report", o.out);
  RunContext& ctx = context ? *context : *owned;
  if (o.inputs.empty() || o.inputs.size() > 2) throw Error(ErrorKind::InvalidInput, "psf-report takes one or two masks");
  std::vector<SamplingMask> masks;
  for (const auto& in : o.inputs) {
    if (fs::is_directory(in)) {
      auto ck = load_checkpoint(in);
      const auto g = checkpoint_geometry(ck);
      masks.push_back(pipeline_from_checkpoint(ck, g.height, g.width, g.num_coils).eval_mask());
    } else {
      masks.push_back(read_mask_pgm(in));
    }
  }
  ojson table = ojson::array();
  std::ostringstream fwhm_csv;
  fwhm_csv.precision(17);
  fwhm_csv << "mask,direction,fwhm\n";
  for (size_t i = 0; i < masks.size(); ++i) {
    const auto psf = compute_psf(masks[i]);
    const auto tag = "mask" + std::to_string(i + 1);
    auto magnitude = psf.magnitude();
    write_pgm(ctx.dir() / (tag + "_psf.pgm"), magnitude);
    ctx.record(ctx.dir() / (tag + "_psf.pgm"));
    ctx.record_all(write_mask(ctx.dir() / tag, masks[i]));
    for (auto d : o.directions) {
      const auto profile = extract_profile(psf, d);
      std::ostringstream csv;
      csv.precision(17);
      csv << "offset,magnitude\n";
      for (size_t k = 0; k < profile.samples.size(); ++k) {
        csv << static_cast<int64_t>(k) - static_cast<int64_t>(profile.peak_index) << ',' << profile.samples[k] << '\n';
      }
      ctx.write_text(tag + "_profile_" + to_string(d) + ".csv", csv.str());
      const double f = fwhm(profile);
      fwhm_csv << tag << ',' << to_string(d) << ',' << f << '\n';
      table.push_back({{"mask", o.inputs[i].string()}, {"direction", to_string(d)},
                       {"fwhm", std::isfinite(f) ? ojson(f) : ojson("unbounded")}});
    }
  }
  ctx.write_text("fwhm.csv", fwhm_csv.str());
  ojson report{{"fwhm", table}};
  if (masks.size() == 2) {
    std::ostringstream cmp;
    cmp.precision(17);
    cmp << "direction,fwhm_mask1,fwhm_mask2,relative_improvement\n";
    ojson rows = ojson::array();
    for (auto d : o.directions) {
      const double f1 = mask_fwhm(masks[0], d);
      const double f2 = mask_fwhm(masks[1], d);
      const double rel = compare_masks(masks[0], masks[1], d);
      cmp << to_string(d) << ',' << f1 << ',' << f2 << ',' << rel << '\n';
      rows.push_back({{"direction", to_string(d)}, {"relative_improvement", std::isfinite(rel) ? ojson(rel) : ojson()}});
    }
    ctx.write_text("comparison.csv", cmp.str());
    report["comparison"] = rows;
  }
  ctx.write_json("psf_report.json", report);
  if (owned) owned->finish();
  return report;
}

std::vector<GridCell> cmd_ablation_grid(const Config& config, const fs::path& out, RunContext* context) {
  std::optional<RunContext> owned;
  if (!context) owned.emplace("ablation-grid", out);
  RunContext& ctx = context ? *context : *owned;
  ctx.set_config(config.to_json());
  ctx.set_seed("seed", config.seed);
  ctx.write_json("config.json", config.to_json());
  if (config.datasets.path.empty()) throw Error(ErrorKind::Config, "datasets.path is required");
  const auto task = config.training.task;
  auto loaded = load_dataset(config.datasets.path, task);
  std::vector<GridCell> cells = config.ablation.kind == AblationKind::CoDesign
                                    ? run_ablation_grid(loaded.dataset, loaded.split, config)
                                    : run_pretrain_study(loaded.dataset, loaded.split, config);
  std::ostringstream table;
  table.precision(17);
  if (config.ablation.kind == AblationKind::CoDesign) {
    table << "cell,mask,task_training,val_" << metric_name(task) << ",test_" << metric_name(task) << '\n';
  } else {
    table << "row,retriever,pretrain,val_" << metric_name(task) << ",test_" << metric_name(task) << '\n';
  }
  const auto& reference = cells.front().test_report;
  ojson summary = ojson::array();
  for (auto& cell : cells) {
    std::string dir = cell.name;
    std::replace(dir.begin(), dir.end(), '/', '_');
    const double test_value = primary_metric(cell.test_report, task);
    if (config.ablation.kind == AblationKind::CoDesign) {
      table << cell.name << ',' << to_string(cell.mask) << ',' << (cell.task_trained ? "finetuned" : "frozen") << ','
            << cell.val_metric << ',' << test_value << '\n';
    } else {
      table << cell.name << ',' << (cell.name == "predictor_only" ? "no" : "yes") << ','
            << (cell.name == "vn_pretrain" ? "yes" : "no") << ',' << cell.val_metric << ',' << test_value << '\n';
    }
    if (&cell != &cells.front()) {
      cell.test_report.comparison = compare_reports(cell.test_report, reference, task, cells.front().name);
    }
    ctx.write_text(dir + "/per_sample.csv", cell.test_report.to_csv());
    ctx.write_text(dir + "/summary.json", report_summary(cell.test_report, task));
    if (!cell.pretrain_log.empty()) ctx.write_text(dir + "/metrics_pretrain.csv", epoch_log_csv(cell.pretrain_log));
    ctx.write_text(dir + "/metrics_finetune.csv", epoch_log_csv(cell.finetune_log));
    ctx.record_all(save_checkpoint(ctx.dir() / dir / "checkpoint", cell.checkpoint));
    ctx.record_all(write_mask(ctx.dir() / dir / "mask", cell.mask_used));
    ojson s{{"name", cell.name}, {"val_metric", cell.val_metric}, {"test_metric", test_value}};
    if (cell.test_report.comparison) {
      s["vs_" + cells.front().name] = {{"p_value", cell.test_report.comparison->p_value},
                                      {"fraction_improved", cell.test_report.comparison->fraction_improved}};
    }
    summary.push_back(s);
  }
  ctx.write_text(config.ablation.kind == AblationKind::CoDesign ? "grid.csv" : "pretrain_table.csv", table.str());
  ctx.write_json("summary.json", summary);
  if (owned) owned->finish();
  return cells;
}

}  // namespace taskmri
