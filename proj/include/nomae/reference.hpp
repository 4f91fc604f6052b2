#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nomae/geometry.hpp"
#include "nomae/model.hpp"

// Slow, independent oracles for tests. Nothing here shares dilation, pooling
// or convolution code with the library proper.
namespace nomae::reference {

// Triple loop over visible x offsets; result sorted, visible removed.
std::vector<Coord> brute_dilate(std::span<const Coord> visible, int radius);

// Floor-halving of every voxel into an ordered map.
SparseOccupancy brute_pool(const SparseOccupancy& fine);

struct RatioEstimate {
  double mean = 0.0;
  double stddev = 0.0;  // across trials
};

// Per-scale masked fraction of repeated HMG draws with per-round ratio r.
std::vector<RatioEstimate> monte_carlo_mask_ratio(const VoxelPyramid& pyramid, double r, int trials,
                                                  uint64_t seed);

// Largest dense grid (cells) a single scale may occupy.
inline constexpr std::size_t kMaxDenseCells = 32 * 32 * 32;

// Full network evaluated with dense grids and explicit activity masks.
// Returns logits per scale aligned with scene.targets.
std::vector<std::vector<double>> dense_forward(const Model<double>& model, const PreparedScene& scene);

}  // namespace nomae::reference
