#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "clr/cli.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool deterministic = false;

  void attach(CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config file (json)");
    sub->add_option("--out", out_dir, "run directory (overrides config out_dir and CLR_OUT_DIR)");
    sub->add_option("--seed", seed, "global seed (overrides config and CLR_SEED)")
        ->each([this](const std::string&) { seed_given = true; });
    sub->add_flag("--deterministic", deterministic, "record the deterministic flag as set");
  }

  clr::CliOverrides overrides() const {
    clr::CliOverrides o;
    if (!out_dir.empty()) o.out_dir = out_dir;
    if (seed_given) o.seed = seed;
    if (deterministic) o.deterministic = true;
    return o;
  }

  clr::ExperimentConfig load(const char* subcommand) const {
    if (config_path.empty())
      throw clr::ConfigError(std::string(subcommand) + " requires --config");
    auto c = clr::load_config(config_path, /*require_out_dir=*/false);
    clr::apply_overrides(c, overrides());
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"channel-wise lightweight reprogramming for continual learning"};
  app.require_subcommand(1);

  CommonArgs pre_args, learn_args, report_args;
  bool resume = false;

  auto* pre = app.add_subcommand("pretrain", "pretrain and freeze a backbone");
  pre_args.attach(pre);

  auto* learn = app.add_subcommand("learn", "run the sequential task protocol");
  learn_args.attach(learn);
  learn->add_flag("--resume", resume, "continue from the run directory's saved state");

  std::string backbone_path, adapter_path, images_path, labels_path;
  int task_id = -1;
  auto* eval = app.add_subcommand("eval", "evaluate one adapter on one IDX test set");
  eval->add_option("--backbone", backbone_path, "backbone checkpoint")->required();
  eval->add_option("--adapter", adapter_path, "adapter checkpoint")->required();
  eval->add_option("--images", images_path, "IDX image file")->required();
  eval->add_option("--labels", labels_path, "IDX label file")->required();
  eval->add_option("--task-id", task_id, "assert the adapter belongs to this task");

  auto* report = app.add_subcommand("report", "regenerate report files from a run directory");
  report_args.attach(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  return clr::run_guarded([&]() -> int {
    if (pre->parsed()) return clr::cmd_pretrain(pre_args.load("pretrain"));
    if (learn->parsed()) return clr::cmd_learn(learn_args.load("learn"), resume);
    if (eval->parsed())
      return clr::cmd_eval(backbone_path, adapter_path, images_path, labels_path, task_id);
    // report: the run directory may come from --out, CLR_OUT_DIR, or a config.
    std::string dir = report_args.out_dir;
    if (dir.empty())
      if (const char* e = std::getenv("CLR_OUT_DIR"); e && *e) dir = e;
    if (dir.empty() && !report_args.config_path.empty())
      dir = clr::load_config(report_args.config_path, /*require_out_dir=*/false).out_dir;
    if (dir.empty())
      throw clr::ConfigError("report needs a run directory (--out, CLR_OUT_DIR, or --config)");
    return clr::cmd_report(dir);
  });
}
