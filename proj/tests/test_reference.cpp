#include <gtest/gtest.h>

#include <cmath>

#include "nomae/error.hpp"
#include "nomae/reference.hpp"
#include "support.hpp"

namespace nomae {
namespace {

TEST(BruteDilate, SingleVoxel) {
  const std::vector<Coord> v{{1, 2, 3}};
  EXPECT_EQ(reference::brute_dilate(v, 1).size(), 26u);
  EXPECT_EQ(reference::brute_dilate(v, 4).size(), 728u);
}

TEST(BrutePool, MatchesLibraryPooling) {
  const auto occ = testing::occupancy_of(testing::random_coords(400, 20, 5));
  EXPECT_EQ(reference::brute_pool(occ), pool_occupancy(occ));
}

TEST(BrutePool, SingletonAtOriginIsAFixedPoint) {
  const auto occ = testing::occupancy_of({{0, 0, 0}});
  const SparseOccupancy once = reference::brute_pool(occ);
  ASSERT_EQ(once.size(), 1u);
  EXPECT_EQ(once.coords()[0], (Coord{0, 0, 0}));
  const SparseOccupancy twice = reference::brute_pool(once);
  EXPECT_EQ(twice.coords()[0], (Coord{0, 0, 0}));
  EXPECT_EQ(twice.payloads()[0].count, 1u);
}

TEST(MonteCarlo, ZeroRatio) {
  const VoxelPyramid p = build_pyramid(testing::occupancy_of(testing::random_coords(100, 8, 1)), 3);
  for (const auto& e : reference::monte_carlo_mask_ratio(p, 0.0, 3, 1)) EXPECT_EQ(e.mean, 0.0);
}

TEST(MonteCarlo, FollowsTheSimulatedLaw) {
  // Scattered voxels: every finest voxel has its own ancestors.
  std::vector<Coord> coords;
  for (int n = 0; n < 20000; ++n) coords.push_back({(n % 100) * 8, (n / 100) * 8, 0});
  const VoxelPyramid p = build_pyramid(testing::occupancy_of(coords), 4);
  const double r = 0.26;
  const auto est = reference::monte_carlo_mask_ratio(p, r, 10, 3);
  for (int s = 0; s < 4; ++s) {
    const double q = expected_total_ratio(r, 4, s, RatioFormula::Simulated);
    EXPECT_NEAR(est[s].mean, q, 4 * std::sqrt(q * (1 - q) / (20000.0 * 10)));
  }
}

PreparedScene small_scene(uint64_t seed) {
  for (uint64_t k = 0;; ++k) {
    const auto coords = testing::blob_coords(2, 30, 4, seed * 97 + k);
    try {
      return prepare_scene(testing::cloud_of(coords, 1.0, seed), testing::small_pipeline(0.3, seed + k));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyInput) throw;
    }
  }
}

TEST(DenseForward, MatchesSparseForward) {
  for (uint64_t seed = 0; seed < 4; ++seed) {
    ModelConfig cfg = testing::small_model_config();
    cfg.init_seed = seed;
    Model<double> model(cfg, NeighborhoodSpec::uniform(4, 9));
    const PreparedScene scene = small_scene(seed);
    nn::Graph<double> g(false);
    const auto out = model.forward(g, scene);
    const auto dense = reference::dense_forward(model, scene);
    for (int s = 0; s < 4; ++s) {
      const auto& sparse = g.value(out.logits[s]).data;
      ASSERT_EQ(sparse.size(), dense[s].size());
      for (std::size_t n = 0; n < sparse.size(); ++n) EXPECT_NEAR(sparse[n], dense[s][n], 1e-5);
    }
  }
}

TEST(DenseForward, ZeroWeightsGiveTheBias) {
  Model<double> model(testing::small_model_config(), NeighborhoodSpec::uniform(4, 9));
  for (auto& t : model.params().tensors()) std::fill(t.value.begin(), t.value.end(), 0.0);
  model.params().get("dec.s2.out.b").value[0] = -1.5;
  const PreparedScene scene = small_scene(7);
  const auto dense = reference::dense_forward(model, scene);
  for (int s = 0; s < 4; ++s)
    for (double v : dense[s]) EXPECT_EQ(v, s == 2 ? -1.5 : 0.0);
}

}  // namespace
}  // namespace nomae
