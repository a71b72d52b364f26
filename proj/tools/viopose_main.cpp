#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "viopose/checks.hpp"
#include "viopose/trainer.hpp"

namespace fs = std::filesystem;
using namespace viopose;

namespace {

RunConfig resolve_config(const std::string& config_path, const std::string& preset) {
  RunConfig cfg;
  if (!config_path.empty()) {
    cfg = RunConfig::load(config_path);
  } else if (preset == "tiny") {
    cfg = RunConfig::tiny();
  } else {
    cfg = RunConfig::defaults();
  }
  return cfg;
}

struct CommonOverrides {
  std::int64_t seed = -1;
  int epochs = -1;
  int batch = -1;
  std::string loss_variant;
  std::string mixing;
  std::string hierarchy;
  bool no_audio = false;

  void apply(RunConfig& cfg) const {
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (epochs >= 0) cfg.epochs = epochs;
    if (batch >= 0) cfg.batch = batch;
    if (!loss_variant.empty()) cfg.loss.variant = loss_variant;
    if (!mixing.empty()) cfg.model.mixing_mode = mixing_mode_from_string(mixing);
    if (!hierarchy.empty()) cfg.model.hierarchy_mode = hierarchy_mode_from_string(hierarchy);
    if (no_audio) cfg.model.use_audio = false;
    apply_env_seed(cfg);
    cfg.finalize();
    cfg.validate();
  }
};

void add_common(CLI::App* app, std::string& config_path, std::string& preset,
                CommonOverrides& ov) {
  app->add_option("--config", config_path, "JSON config file");
  app->add_option("--preset", preset, "built-in preset: default|tiny");
  app->add_option("--seed", ov.seed, "override seed");
  app->add_option("--epochs", ov.epochs, "override epoch count");
  app->add_option("--batch", ov.batch, "override batch size");
  app->add_option("--loss", ov.loss_variant, "loss variant: main|appendix");
  app->add_option("--mixing", ov.mixing, "mixing mode: full|no_int|no_diff|none|parallel");
  app->add_option("--hierarchy", ov.hierarchy,
                  "hierarchy mode: cascade|no_cascade|concat|conditioning");
  app->add_flag("--no-audio", ov.no_audio, "disable the audio path");
}

const std::vector<std::string>& split_dirs(const DatasetIndex& idx, const std::string& split) {
  if (split == "train") return idx.train_dirs;
  if (split == "val") return idx.val_dirs;
  if (split == "test") return idx.test_dirs;
  throw std::invalid_argument("unknown split '" + split + "' (want train|val|test)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"viopose: audiovisual 4D pose estimation on a synthetic causal dataset"};
  app.require_subcommand(1);

  std::string config_path, preset, data_dir, out_dir, checkpoint_dir, resume_dir, split = "test";
  std::string compare_checkpoint;
  bool force = false, no_kalman = false, kalman = false, oracle = false;
  CommonOverrides ov;

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  add_common(gen, config_path, preset, ov);
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_flag("--force", force, "overwrite a non-empty directory");

  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, config_path, preset, ov);
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", out_dir, "run directory")->required();
  train->add_option("--resume", resume_dir, "checkpoint to resume from");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint_dir, "checkpoint directory")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--split", split, "split: train|val|test");
  eval->add_option("--out", out_dir, "report directory");
  eval->add_flag("--no-kalman", no_kalman, "disable Kalman fusion");
  eval->add_flag("--kalman", kalman, "force Kalman fusion");

  auto* analyze = app.add_subcommand("analyze", "violin-performance analysis tasks");
  analyze->add_option("--checkpoint", checkpoint_dir, "checkpoint directory");
  analyze->add_option("--data", data_dir, "dataset directory")->required();
  analyze->add_option("--split", split, "split: train|val|test");
  analyze->add_option("--out", out_dir, "output directory (scores + plots)");
  analyze->add_flag("--kalman", kalman, "apply Kalman fusion before analysis");
  analyze->add_flag("--oracle", oracle, "analyze ground-truth poses (needs --config/--preset)");
  analyze->add_option("--compare", compare_checkpoint, "second checkpoint for a comparison table");
  add_common(analyze, config_path, preset, ov);

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      RunConfig cfg = resolve_config(config_path, preset);
      ov.apply(cfg);
      generate_dataset(cfg, out_dir, force);
      const DatasetIndex idx = load_dataset_index(out_dir);
      std::cout << "generated " << idx.train_dirs.size() << " train / " << idx.val_dirs.size()
                << " val / " << idx.test_dirs.size() << " test samples in " << out_dir << "\n";
    } else if (train->parsed()) {
      RunConfig cfg = resolve_config(config_path, preset);
      ov.apply(cfg);
      TrainResult res = train_model(cfg, data_dir, out_dir, resume_dir);
      std::cout << "trained " << res.epochs_run << " epochs; train loss "
                << res.first_train_loss << " -> " << res.last_train_loss << "; best val MPJPE "
                << res.best_val_mpjpe << " (epoch " << res.best_epoch << ")\n"
                << "best checkpoint: " << res.best_checkpoint_dir << "\n";
    } else if (eval->parsed()) {
      Checkpoint ckpt = load_checkpoint(checkpoint_dir);
      const DatasetIndex idx = load_dataset_index(data_dir);
      const bool use_kalman = kalman || (ckpt.config.kalman && !no_kalman);
      EvalResult res =
          evaluate_split(*ckpt.model, ckpt.config, split_dirs(idx, split), use_kalman);
      std::cout << res.aggregate.to_json() << "\n";
      if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream(out_dir + "/metrics.json") << res.aggregate.to_json() << "\n";
        std::ofstream(out_dir + "/per_joint.csv") << res.aggregate.per_joint_csv();
      }
    } else if (analyze->parsed()) {
      AnalyzeOptions opts;
      opts.use_kalman = kalman;
      opts.oracle = oracle;
      if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        opts.plot_dir = out_dir + "/plots";
      }
      RunConfig cfg;
      std::unique_ptr<VioPoseModel> model;
      if (oracle) {
        cfg = resolve_config(config_path, preset);
        ov.apply(cfg);
      } else {
        if (checkpoint_dir.empty()) throw std::runtime_error("analyze: --checkpoint or --oracle required");
        Checkpoint ckpt = load_checkpoint(checkpoint_dir);
        cfg = ckpt.config;
        model = std::move(ckpt.model);
      }
      const DatasetIndex idx = load_dataset_index(data_dir);
      AnalyzeResult res = analyze_split(model.get(), cfg, split_dirs(idx, split), opts);
      std::cout << res.scores.to_table();
      std::cout << res.scores.to_json() << "\n";
      if (!out_dir.empty()) {
        std::ofstream(out_dir + "/scores.json") << res.scores.to_json() << "\n";
      }
      if (!compare_checkpoint.empty()) {
        Checkpoint other = load_checkpoint(compare_checkpoint);
        AnalyzeResult res2 = analyze_split(other.model.get(), other.config,
                                           split_dirs(idx, split), opts);
        std::cout << "comparison (" << checkpoint_dir << " vs " << compare_checkpoint << ")\n";
        std::cout << res.scores.to_table() << res2.scores.to_table();
        if (!out_dir.empty()) {
          std::ofstream(out_dir + "/scores_compare.json")
              << "{\"primary\":" << res.scores.to_json()
              << ",\"compare\":" << res2.scores.to_json() << "}\n";
        }
      }
    } else if (gc->parsed()) {
      bool all_ok = true;
      for (const CheckResult& r : run_primitive_gradchecks()) {
        std::cout << (r.ok() ? "[ok]   " : "[FAIL] ") << r.name << " max rel err "
                  << r.max_rel_err << " (tol " << r.tolerance << ")\n";
        all_ok = all_ok && r.ok();
      }
      for (const std::string& variant : {std::string("main"), std::string("appendix")}) {
        const CheckResult r = run_model_gradcheck(variant);
        std::cout << (r.ok() ? "[ok]   " : "[FAIL] ") << r.name << " max rel err "
                  << r.max_rel_err << " (tol " << r.tolerance << ")\n";
        all_ok = all_ok && r.ok();
      }
      if (!all_ok) {
        std::cerr << "error: gradient check failed\n";
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
