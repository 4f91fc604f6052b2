#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nomae/config.hpp"

namespace nomae {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

struct CommandOptions {
  std::optional<std::filesystem::path> config;
  std::optional<uint64_t> seed;
  std::optional<int64_t> steps;
  bool overfit_one = false;
  std::string strategy = "all";  // mask-stats: hmg | naive | upsample | all
  std::optional<int> seeds;      // mask-stats: seeds per scene
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> checkpoint;  // eval
  bool oracle_logits = false;                       // eval: perfect-predictor fixture
};

// Config after file, flags and derived overrides (e.g. --overfit-one).
RunConfig effective_config(const CommandOptions& opts);

// --out, then $NOMAE_OUT, then run.out_dir.
std::filesystem::path resolve_out_dir(const CommandOptions& opts, const RunConfig& cfg);

// Training scenes and held-out evaluation scenes as configured.
std::vector<PointCloud> training_scenes(const RunConfig& cfg);
std::vector<PointCloud> evaluation_scenes(const RunConfig& cfg);

uint64_t fnv1a64(const std::filesystem::path& path);

// Lists every file under `dir` (except the manifest) with size and FNV-1a 64 hash.
void write_manifest(const std::filesystem::path& dir);

// Runs `pretrain`, `mask-stats`, `targets-dump`, `gradcheck`, `synth` or
// `eval`, mapping failures to exit codes. Progress goes to `log`.
int run_command(const std::string& name, const CommandOptions& opts, std::ostream& log, std::ostream& err);

}  // namespace nomae
