// Command-line front end: generate, train, eval, psf-report, ood-eval, ablation-grid.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include "taskmri/log.hpp"
#include <torch/torch.h>

#include "taskmri/config.hpp"
#include "taskmri/errors.hpp"
#include "taskmri/harness.hpp"

namespace fs = std::filesystem;
using namespace taskmri;

namespace {

void check_device(const std::string& device) {
  if (device != "cpu") throw Error(ErrorKind::Config, "unsupported --device '" + device + "' (only cpu is built)");
}

Config load_config(const std::string& path, const std::optional<uint64_t>& seed) {
  auto config = Config::load(path);
  if (seed) config.seed = *seed;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task-driven k-space sampling: data generation, training and reports"};
  app.require_subcommand(1);
  std::string device = "cpu";
  bool verbose = false;
  app.add_option("--device", device, "Compute device")->capture_default_str();
  app.add_flag("-v,--verbose", verbose, "Log every epoch");

  GenerateOptions gen;
  std::string gen_task = "roi_recon", gen_out;
  int64_t gen_size = 64;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset and its patient split");
  generate->add_option("--task", gen_task, "full_fov | roi_recon | segmentation | classification")
      ->capture_default_str();
  generate->add_option("--count", gen.count, "Number of samples")->capture_default_str();
  generate->add_option("--size", gen_size, "Square grid side")->capture_default_str();
  generate->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  generate->add_option("--classes", gen.num_classes, "Segmentation classes incl. background")->capture_default_str();
  generate->add_option("--lesion-rate", gen.lesion_rate, "Positive fraction for classification")->capture_default_str();
  generate->add_option("--stripe-scale", gen.stripe_scale, "Stripe thickness multiplier (OOD shift)")
      ->capture_default_str();
  generate->add_option("--coils", gen.num_coils, "Receive coils")->capture_default_str();
  generate->add_option("--out", gen_out, "Output dataset directory")->required();

  std::string config_path, out;
  std::optional<uint64_t> seed;
  auto* train = app.add_subcommand("train", "Run the configured training stage(s)");
  train->add_option("--config", config_path, "JSON config")->required();
  train->add_option("--seed", seed, "Override config seed");
  train->add_option("--out", out, "Run directory");

  EvalCommandOptions ev;
  std::string ev_task, ev_ckpt, ev_data, compare_to;
  auto add_eval_options = [&](CLI::App* cmd) {
    cmd->add_option("--checkpoint", ev_ckpt, "Checkpoint directory")->required();
    cmd->add_option("--dataset", ev_data, "Dataset directory")->required();
    cmd->add_option("--task", ev_task, "Task (defaults to the checkpoint's)");
    cmd->add_option("--split", ev.split, "train | val | test")->capture_default_str();
    cmd->add_option("--noise-seed", ev.noise_seed, "Measurement noise seed")->capture_default_str();
    cmd->add_option("--compare-to", compare_to, "Baseline checkpoint for a paired comparison");
    cmd->add_option("--out", out, "Report directory");
  };
  auto* eval = app.add_subcommand("eval", "Per-sample metrics for a checkpoint");
  add_eval_options(eval);
  auto* ood = app.add_subcommand("ood-eval", "Evaluation on a shifted generator, tagged as out-of-distribution");
  add_eval_options(ood);
  std::string shift = "stripe_thickness";
  ood->add_option("--shift", shift, "Description of the distribution shift")->capture_default_str();

  PsfCommandOptions psf;
  std::vector<std::string> psf_inputs;
  std::string direction = "both";
  auto* psf_cmd = app.add_subcommand("psf-report", "PSF images, profiles and FWHM for one or two masks");
  psf_cmd->add_option("inputs", psf_inputs, "Mask .pgm files or checkpoint directories")->required()->expected(1, 2);
  psf_cmd->add_option("--direction", direction, "vertical | horizontal | both")->capture_default_str();
  psf_cmd->add_option("--out", out, "Report directory");

  auto* grid = app.add_subcommand("ablation-grid", "Co-design grid or pretraining study (config ablation.kind)");
  grid->add_option("--config", config_path, "JSON config")->required();
  grid->add_option("--seed", seed, "Override config seed");
  grid->add_option("--out", out, "Run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorKind::Config);
  }
  log::set_level(verbose ? log::Level::Debug : log::Level::Info);
  torch::set_num_threads(1);

  try {
    check_device(device);
    if (*generate) {
      gen.task = parse_task(gen_task);
      gen.height = gen.width = gen_size;
      gen.out = resolve_output_dir(gen_out, "dataset");
      auto ctx = cmd_generate(gen);
      std::cout << ctx.dir().string() << '\n';
    } else if (*train) {
      auto config = load_config(config_path, seed);
      const auto dir = resolve_output_dir(out, "runs/train");
      auto outcome = cmd_train(config, dir);
      std::cout << "best validation metric " << outcome.best_val_metric << "\ncheckpoint "
                << outcome.checkpoint_dir.string() << '\n';
    } else if (*eval || *ood) {
      ev.checkpoint = ev_ckpt;
      ev.dataset = ev_data;
      if (!ev_task.empty()) ev.task = parse_task(ev_task);
      if (!compare_to.empty()) ev.compare_to = fs::path(compare_to);
      if (*ood) {
        ev.tags["distribution_shift"] = "ood";
        ev.tags["shift"] = shift;
      }
      ev.out = resolve_output_dir(out, *ood ? "runs/ood-eval" : "runs/eval");
      auto report = cmd_eval(ev);
      std::cout << report.summary_json() << '\n';
    } else if (*psf_cmd) {
      for (const auto& p : psf_inputs) psf.inputs.emplace_back(p);
      if (direction != "both") psf.directions = {parse_direction(direction)};
      psf.out = resolve_output_dir(out, "runs/psf-report");
      std::cout << cmd_psf_report(psf).dump(2) << '\n';
    } else if (*grid) {
      auto config = load_config(config_path, seed);
      const auto dir = resolve_output_dir(out, "runs/ablation-grid");
      for (const auto& cell : cmd_ablation_grid(config, dir)) {
        std::cout << cell.name << " val " << cell.val_metric << '\n';
      }
    }
  } catch (const NumericalFailure& e) {
    log::error("numerical failure (cascade " + std::to_string(e.cascade_index()) + "): " + e.what());
    return exit_code(e.kind());
  } catch (const Error& e) {
    log::error(std::string(to_string(e.kind())) + ": " + e.what());
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    log::error(std::string("io: ") + e.what());
    return exit_code(ErrorKind::Io);
  }
  return 0;
}
