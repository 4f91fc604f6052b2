#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "nomae/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Occupancy-reconstruction pretraining for sparse LiDAR voxels"};
  app.require_subcommand(1);

  nomae::CommandOptions opts;
  std::string config, out, checkpoint;
  uint64_t seed = 0;
  int64_t steps = 0;
  int seeds = 0;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "TOML run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "master seed (masks, init, augmentation)");
    cmd->add_option("--out", out, "run directory (overrides NOMAE_OUT and run.out_dir)");
  };

  auto* pretrain = app.add_subcommand("pretrain", "train on synthetic or file scenes");
  common(pretrain);
  pretrain->add_option("--steps", steps, "optimizer steps (overrides epochs)");
  pretrain->add_flag("--overfit-one", opts.overfit_one, "single scene, batch 1, fixed masks, no augmentation");

  auto* mask_stats = app.add_subcommand("mask-stats", "per-scale masking ratios and recovered fractions");
  common(mask_stats);
  mask_stats->add_option("--strategy", opts.strategy, "hmg | naive | upsample | all")
      ->check(CLI::IsMember({"hmg", "naive", "upsample", "all"}));
  mask_stats->add_option("--seeds", seeds, "mask seeds per scene");

  auto* targets = app.add_subcommand("targets-dump", "write per-scale occupancy targets of the first scene");
  common(targets);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every op in 64-bit");
  common(gradcheck);

  auto* synth = app.add_subcommand("synth", "write synthetic scenes as bin_xyzi");
  common(synth);

  auto* eval = app.add_subcommand("eval", "occupancy metrics of a checkpoint");
  common(eval);
  eval->add_option("--checkpoint", checkpoint, "checkpoint file (default: <out>/checkpoint.bin)");
  eval->add_flag("--oracle-logits", opts.oracle_logits, "score the perfect predictor instead of a checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : nomae::kExitConfig;
  }

  CLI::App* cmd = app.get_subcommands().front();
  if (!config.empty()) opts.config = config;
  if (!out.empty()) opts.out = out;
  if (!checkpoint.empty()) opts.checkpoint = checkpoint;
  if (cmd->count("--seed")) opts.seed = seed;
  if (cmd->get_name() == "pretrain" && cmd->count("--steps")) opts.steps = steps;
  if (cmd->get_name() == "mask-stats" && cmd->count("--seeds")) opts.seeds = seeds;
  return nomae::run_command(cmd->get_name(), opts, std::cout, std::cerr);
}
