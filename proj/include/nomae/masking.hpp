#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "nomae/geometry.hpp"

namespace nomae {

enum class MaskStrategy {
  Hmg,             // coarse-to-fine recursive masking
  NaivePoolUp,     // mask finest, coarse voxel masked iff all children masked
  CoarseUpsample,  // mask coarsest, children inherit
};

std::string_view to_string(MaskStrategy s);
MaskStrategy parse_mask_strategy(std::string_view name);

// `ratio` is the per-round Bernoulli probability. For HMG this is the per-scale
// r; for the two baselines it is the ratio at the scale where masking happens.
struct MaskingConfig {
  double ratio = 0.0;
  MaskStrategy strategy = MaskStrategy::Hmg;
  uint64_t seed = 0;

  void validate() const;
};

struct ScaleMask {
  std::vector<uint8_t> masked_flag;  // aligned with the pyramid level's coords
  std::vector<Coord> visible;        // sorted
  std::vector<Coord> masked;         // sorted
};

struct MaskAssignment {
  std::vector<ScaleMask> scales;

  int num_scales() const { return static_cast<int>(scales.size()); }
  const ScaleMask& at(int s) const;
};

// Uniform [0,1) draw that depends only on (seed, scale, coordinate).
double mask_draw(uint64_t seed, int scale, Coord c);

MaskAssignment hmg_generate(const VoxelPyramid& pyramid, const MaskingConfig& cfg);
MaskAssignment naive_generate(const VoxelPyramid& pyramid, const MaskingConfig& cfg);
MaskAssignment upsample_generate(const VoxelPyramid& pyramid, const MaskingConfig& cfg);
// Dispatches on cfg.strategy.
MaskAssignment generate_mask(const VoxelPyramid& pyramid, const MaskingConfig& cfg);

enum class RatioFormula {
  ExtraRound,  // 1 - (1 - r)^(S - s + 1): one more round than scales S-1..s
  Simulated,  // 1 - (1 - r)^(S - s), one Bernoulli round per scale S-1..s
};

double expected_total_ratio(double r, int num_scales, int scale, RatioFormula variant);

// Per-round HMG ratio that yields `total` at `scale` under the Simulated law.
double hmg_ratio_for_total(double total, int num_scales, int scale = 0);

// Config whose finest-scale total ratio is `total` for the given strategy.
MaskingConfig masking_for_total(MaskStrategy strategy, double total, int num_scales, uint64_t seed);

struct ScaleMaskStats {
  int scale = 0;
  std::size_t occupied = 0;
  std::size_t masked = 0;
  double ratio = 0.0;
  double extra_round = 0.0;
  double simulated = 0.0;
};

// `per_round_ratio` feeds the two formula predictions (HMG semantics).
std::vector<ScaleMaskStats> mask_stats(const MaskAssignment& assignment, const VoxelPyramid& pyramid,
                                       double per_round_ratio);

void write_mask_stats_text(std::ostream& os, const std::vector<ScaleMaskStats>& stats);
void write_mask_stats_csv(std::ostream& os, const std::vector<ScaleMaskStats>& stats);

// Visible finest-scale voxels with their payloads.
SparseOccupancy encoder_input(const MaskAssignment& assignment, const VoxelPyramid& pyramid);

}  // namespace nomae
