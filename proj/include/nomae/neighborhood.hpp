#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "nomae/masking.hpp"

namespace nomae {

// Odd cube side per scale, in voxels of that scale.
struct NeighborhoodSpec {
  std::vector<int> side;

  static NeighborhoodSpec uniform(int num_scales, int n) { return {std::vector<int>(num_scales, n)}; }

  int num_scales() const { return static_cast<int>(side.size()); }
  int radius(int s) const;
  void validate() const;
};

struct ScaleTargets {
  std::vector<Coord> coords;    // sorted
  std::vector<uint8_t> labels;  // 1 iff the coord is occupied at this scale
};

struct TargetSet {
  std::vector<ScaleTargets> scales;

  int num_scales() const { return static_cast<int>(scales.size()); }
};

// Union of Chebyshev balls of radius `radius` around `visible`, minus `visible`.
// Output is sorted.
std::vector<Coord> dilate(std::span<const Coord> visible, int radius);

TargetSet build_targets(const MaskAssignment& assignment, const VoxelPyramid& pyramid, const NeighborhoodSpec& spec);

struct RecoveryStats {
  int scale = 0;
  std::size_t masked = 0;
  std::size_t recovered = 0;
  std::size_t lost = 0;
  double recovered_fraction = 0.0;  // 1 when nothing is masked
};

std::vector<RecoveryStats> recovered_lost_accounting(const MaskAssignment& assignment, const TargetSet& targets);

// Chebyshev distance from each masked voxel (in `mask.masked` order) to the
// nearest visible voxel of the same scale; max_radius + 1 when farther.
// A masked voxel is recovered by side n exactly when its distance is <= (n-1)/2.
std::vector<int> masked_distance(const ScaleMask& mask, int max_radius);

// Per-scale CSV rows: s,i,j,k,label
void write_targets_csv(std::ostream& os, const TargetSet& targets);

}  // namespace nomae
