#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <set>
#include <vector>

#include "nomae/coord.hpp"
#include "nomae/geometry.hpp"
#include "nomae/model.hpp"

namespace nomae::testing {

// Distinct random coords inside [-extent, extent)^3.
inline std::vector<Coord> random_coords(std::size_t n, int extent, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(-extent, extent - 1);
  std::set<Coord> out;
  while (out.size() < n) out.insert({d(rng), d(rng), d(rng)});
  return {out.begin(), out.end()};
}

inline SparseOccupancy occupancy_of(const std::vector<Coord>& coords, double size = 1.0) {
  CoordTable table(coords);
  std::vector<VoxelPayload> payloads(table.size(), VoxelPayload{1, {0.5f, 0.5f, 0.5f}});
  return SparseOccupancy(0, size, {0.0, 0.0, 0.0}, std::move(table), std::move(payloads));
}

// One point at a random position inside each voxel of `coords` (voxel size `size`).
inline PointCloud cloud_of(const std::vector<Coord>& coords, double size, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  PointCloud cloud;
  for (const Coord& c : coords)
    cloud.points.push_back({static_cast<float>((c.i + u(rng)) * size), static_cast<float>((c.j + u(rng)) * size),
                            static_cast<float>((c.k + u(rng)) * size), 0.5f});
  return cloud;
}

// A few blobs of surface-like voxels: a random walk per blob, so scales share structure.
inline std::vector<Coord> blob_coords(int blobs, int steps, int spread, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> start(-spread, spread);
  std::uniform_int_distribution<int> step(-1, 1);
  std::set<Coord> out;
  for (int b = 0; b < blobs; ++b) {
    Coord c{start(rng), start(rng), start(rng)};
    for (int t = 0; t < steps; ++t) {
      out.insert(c);
      c = c + Coord{step(rng), step(rng), step(rng)};
      c.i = std::clamp(c.i, -spread, spread);
      c.j = std::clamp(c.j, -spread, spread);
      c.k = std::clamp(c.k, -spread, spread);
    }
  }
  return {out.begin(), out.end()};
}

inline ModelConfig small_model_config(int num_scales = 4, int layers = 2, int reach = 2) {
  ModelConfig cfg;
  cfg.num_scales = num_scales;
  cfg.channels.assign(static_cast<std::size_t>(num_scales), 4);
  cfg.encoder_blocks = 1;
  cfg.decoder.layers = layers;
  cfg.decoder.reach = reach;
  cfg.decoder.head_depth = 1;
  cfg.prior_bias_init = false;
  cfg.init_seed = 11;
  return cfg;
}

inline PipelineConfig small_pipeline(double ratio, uint64_t seed, int num_scales = 4, int side = 9) {
  PipelineConfig pc;
  pc.base_size = 1.0;
  pc.num_scales = num_scales;
  pc.masking = MaskingConfig{ratio, MaskStrategy::Hmg, seed};
  pc.neighborhood = NeighborhoodSpec::uniform(num_scales, side);
  return pc;
}

}  // namespace nomae::testing
