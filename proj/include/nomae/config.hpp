#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nomae/data.hpp"
#include "nomae/model.hpp"
#include "nomae/train.hpp"

namespace nomae {

// ---- TOML subset: [tables], key = int | float | bool | "string" | [array]

struct TomlValue {
  using Array = std::vector<TomlValue>;
  std::variant<int64_t, double, bool, std::string, Array> v;
};

using TomlTable = std::map<std::string, TomlValue>;
using TomlDocument = std::map<std::string, TomlTable>;  // "" holds top-level keys

TomlDocument parse_toml(std::string_view text);

// ---- run configuration

struct DataConfig {
  std::string source = "synth";  // "synth" or "files"
  std::vector<std::string> paths;
  PointFormat format = PointFormat::BinXyzi;
  int num_scenes = 8;   // synth: training scenes generated
  int eval_scenes = 2;  // synth: extra held-out scenes for the final report
};

struct RunConfig {
  uint64_t seed = 0;
  std::string out_dir = "runs/nomae";
  std::string precision = "f32";  // "f32" or "f64"
  int checkpoint_every = 0;       // steps; 0 keeps only the final checkpoint

  // geometry
  double base_size = kDefaultBaseSize;
  Vec3 origin{0.0, 0.0, 0.0};
  int num_scales = 4;
  bool clip = true;
  std::array<double, 6> clip_range{-51.2, -51.2, -5.0, 51.2, 51.2, 3.0};  // xmin ymin zmin xmax ymax zmax

  // masking: finest-scale total ratio; the per-round ratio is derived per strategy
  MaskStrategy strategy = MaskStrategy::Hmg;
  double total_ratio = 0.7;
  int stats_seeds = 20;
  std::vector<int> sweep{3, 5, 7, 9, 11, 13};

  NeighborhoodSpec neighborhood = NeighborhoodSpec::uniform(4, 9);
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  SceneConfig synth;

  void validate() const;
  PipelineConfig pipeline() const;
  ModelConfig model_config() const;  // init seed derived from `seed`
  TrainConfig train_config() const;  // seed derived from `seed`
};

RunConfig run_config_from_toml(const TomlDocument& doc);
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

// Writes every field, so the output reloads to an identical RunConfig.
void write_run_config(std::ostream& os, const RunConfig& cfg);

}  // namespace nomae
