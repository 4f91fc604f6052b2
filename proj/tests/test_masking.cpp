#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nomae/error.hpp"
#include "nomae/masking.hpp"
#include "nomae/reference.hpp"
#include "support.hpp"

namespace nomae {
namespace {

VoxelPyramid random_pyramid(std::size_t n, int extent, uint64_t seed, int S = 4) {
  return build_pyramid(testing::occupancy_of(testing::random_coords(n, extent, seed)), S);
}

// Every visible voxel at s < S-1 has a visible parent.
std::size_t consistency_violations(const MaskAssignment& m, const VoxelPyramid& p) {
  std::size_t bad = 0;
  for (int s = 0; s + 1 < p.num_scales(); ++s) {
    const SparseOccupancy& coarse = p.level(s + 1);
    for (const Coord& c : m.at(s).visible)
      if (m.at(s + 1).masked_flag[coarse.find(parent_of(c))]) ++bad;
  }
  return bad;
}

double masked_fraction(const MaskAssignment& m, int s) {
  const auto& f = m.at(s).masked_flag;
  return static_cast<double>(std::count(f.begin(), f.end(), uint8_t{1})) / static_cast<double>(f.size());
}

TEST(Hmg, ZeroRatioKeepsEverythingVisible) {
  const VoxelPyramid p = random_pyramid(400, 16, 1);
  const MaskAssignment m = hmg_generate(p, {0.0, MaskStrategy::Hmg, 3});
  for (int s = 0; s < 4; ++s) {
    EXPECT_TRUE(m.at(s).masked.empty());
    EXPECT_EQ(m.at(s).visible.size(), p.level(s).size());
  }
}

TEST(Hmg, PerRoundRatioForSeventyPercent) {
  const double r = hmg_ratio_for_total(0.70, 4);
  EXPECT_NEAR(r, 0.2599, 1e-4);
  EXPECT_NEAR(1.0 - std::pow(1.0 - r, 4), 0.70, 1e-12);
}

TEST(Hmg, FinestRatioMatchesTotalOnLargeScene) {
  // ~1.2e5 finest voxels; mean over seeds.
  const VoxelPyramid p = random_pyramid(120000, 80, 2);
  const MaskingConfig cfg = masking_for_total(MaskStrategy::Hmg, 0.70, 4, 0);
  const auto est = reference::monte_carlo_mask_ratio(p, cfg.ratio, 5, 17);
  EXPECT_NEAR(est[0].mean, 0.70, 0.01);
  EXPECT_NEAR(est[0].mean, expected_total_ratio(cfg.ratio, 4, 0, RatioFormula::Simulated), 0.01);
}

TEST(Hmg, SplitsEveryLevelIntoVisibleAndMasked) {
  const VoxelPyramid p = random_pyramid(600, 16, 4);
  const MaskAssignment m = hmg_generate(p, {0.3, MaskStrategy::Hmg, 5});
  for (int s = 0; s < 4; ++s) {
    const ScaleMask& sm = m.at(s);
    EXPECT_EQ(sm.visible.size() + sm.masked.size(), p.level(s).size());
    EXPECT_TRUE(std::is_sorted(sm.visible.begin(), sm.visible.end()));
    EXPECT_TRUE(std::is_sorted(sm.masked.begin(), sm.masked.end()));
  }
}

TEST(Hmg, DeterministicPerSeed) {
  const VoxelPyramid p = random_pyramid(600, 16, 4);
  const MaskAssignment a = hmg_generate(p, {0.3, MaskStrategy::Hmg, 5});
  const MaskAssignment b = hmg_generate(p, {0.3, MaskStrategy::Hmg, 5});
  const MaskAssignment c = hmg_generate(p, {0.3, MaskStrategy::Hmg, 6});
  for (int s = 0; s < 4; ++s) EXPECT_EQ(a.at(s).masked_flag, b.at(s).masked_flag);
  bool differs = false;
  for (int s = 0; s < 4; ++s) differs |= a.at(s).masked_flag != c.at(s).masked_flag;
  EXPECT_TRUE(differs);
}

TEST(AllStrategies, VisibleVoxelsHaveVisibleParents) {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const VoxelPyramid p = random_pyramid(300, 10, 100 + seed);
    for (MaskStrategy st : {MaskStrategy::Hmg, MaskStrategy::NaivePoolUp, MaskStrategy::CoarseUpsample}) {
      const MaskAssignment m = generate_mask(p, masking_for_total(st, 0.7, 4, seed));
      EXPECT_EQ(consistency_violations(m, p), 0u) << to_string(st) << " seed " << seed;
    }
  }
}

TEST(Naive, FullRatioMasksEverything) {
  const VoxelPyramid p = random_pyramid(200, 10, 9);
  const MaskAssignment m = naive_generate(p, {1.0, MaskStrategy::NaivePoolUp, 0});
  for (int s = 0; s < 4; ++s) EXPECT_TRUE(m.at(s).visible.empty());
}

TEST(Naive, ParentOfEightChildrenMaskedWithProbabilityHalfToTheEighth) {
  std::vector<Coord> kids;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) kids.push_back({a, b, c});
  const VoxelPyramid p = build_pyramid(testing::occupancy_of(kids), 2);
  const int trials = 40000;
  int masked = 0;
  for (int t = 0; t < trials; ++t)
    masked += naive_generate(p, {0.5, MaskStrategy::NaivePoolUp, static_cast<uint64_t>(t)}).at(1).masked_flag[0];
  const double q = std::pow(0.5, 8);
  const double sigma = std::sqrt(q * (1 - q) / trials);
  EXPECT_NEAR(static_cast<double>(masked) / trials, q, 3 * sigma);
}

TEST(Naive, CoarsestRatioCollapsesRelativeToHmg) {
  const VoxelPyramid p = build_pyramid(
      testing::occupancy_of(testing::blob_coords(6, 3000, 40, 21)), 4);
  int wins = 0;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    const double naive = masked_fraction(naive_generate(p, masking_for_total(MaskStrategy::NaivePoolUp, 0.7, 4, seed)), 3);
    const double hmg = masked_fraction(hmg_generate(p, masking_for_total(MaskStrategy::Hmg, 0.7, 4, seed)), 3);
    wins += naive < hmg;
  }
  EXPECT_EQ(wins, 20);
}

TEST(Upsample, FineStateEqualsParentState) {
  const VoxelPyramid p = random_pyramid(800, 20, 12);
  const MaskAssignment m = upsample_generate(p, {0.4, MaskStrategy::CoarseUpsample, 3});
  for (int s = 0; s + 1 < 4; ++s) {
    const auto coords = p.level(s).coords();
    for (std::size_t n = 0; n < coords.size(); ++n)
      EXPECT_EQ(m.at(s).masked_flag[n], m.at(s + 1).masked_flag[p.level(s + 1).find(parent_of(coords[n]))]);
  }
}

TEST(Upsample, RatioRoughlyConstantAcrossScalesOnScatteredVoxels) {
  // With one child per parent the inherited ratio is exactly the coarse ratio.
  std::vector<Coord> coords;
  for (int n = 0; n < 4000; ++n) coords.push_back({(n % 50) * 8, (n / 50) * 8, 0});
  const VoxelPyramid p = build_pyramid(testing::occupancy_of(coords), 4);
  const MaskAssignment m = upsample_generate(p, {0.4, MaskStrategy::CoarseUpsample, 1});
  for (int s = 0; s < 3; ++s) EXPECT_DOUBLE_EQ(masked_fraction(m, s), masked_fraction(m, 3));
}

TEST(Formula, ZeroRatioGivesZero) {
  for (int S = 1; S <= 5; ++S)
    for (int s = 0; s < S; ++s) {
      EXPECT_EQ(expected_total_ratio(0.0, S, s, RatioFormula::ExtraRound), 0.0);
      EXPECT_EQ(expected_total_ratio(0.0, S, s, RatioFormula::Simulated), 0.0);
    }
}

TEST(Formula, ExtraRoundAndSimulatedExponents) {
  const double r = 0.3;
  EXPECT_NEAR(expected_total_ratio(r, 4, 0, RatioFormula::ExtraRound), 1.0 - std::pow(0.7, 5), 1e-15);
  EXPECT_NEAR(expected_total_ratio(r, 4, 0, RatioFormula::Simulated), 1.0 - std::pow(0.7, 4), 1e-15);
  EXPECT_NEAR(expected_total_ratio(0.2599, 4, 0, RatioFormula::Simulated), 0.700, 1e-3);
  EXPECT_THROW(expected_total_ratio(1.0, 4, 0, RatioFormula::Simulated), Error);
}

TEST(MaskStats, AllVisibleGivesZeroRatio) {
  const VoxelPyramid p = random_pyramid(200, 10, 3);
  const MaskAssignment m = hmg_generate(p, {0.0, MaskStrategy::Hmg, 0});
  const auto stats = mask_stats(m, p, 0.0);
  ASSERT_EQ(stats.size(), 4u);
  for (const auto& s : stats) EXPECT_EQ(s.ratio, 0.0);
}

TEST(MaskStats, ReportCarriesBothPredictions) {
  const VoxelPyramid p = random_pyramid(300, 10, 3);
  const double r = 0.25;
  const auto stats = mask_stats(hmg_generate(p, {r, MaskStrategy::Hmg, 1}), p, r);
  for (const auto& s : stats) {
    EXPECT_NEAR(s.extra_round, expected_total_ratio(r, 4, s.scale, RatioFormula::ExtraRound), 1e-12);
    EXPECT_NEAR(s.simulated, expected_total_ratio(r, 4, s.scale, RatioFormula::Simulated), 1e-12);
  }
  std::ostringstream text, csv;
  write_mask_stats_text(text, stats);
  write_mask_stats_csv(csv, stats);
  EXPECT_FALSE(text.str().empty());
  const std::string rows = csv.str();
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 5);
}

TEST(EncoderInput, ZeroRatioEqualsFinestLevel) {
  const VoxelPyramid p = random_pyramid(300, 10, 8);
  const SparseOccupancy in = encoder_input(hmg_generate(p, {0.0, MaskStrategy::Hmg, 0}), p);
  EXPECT_EQ(in, p.level(0));
}

TEST(EncoderInput, PartitionAndCount) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const VoxelPyramid p = random_pyramid(400, 10, 50 + seed);
    const MaskAssignment m = hmg_generate(p, {0.3, MaskStrategy::Hmg, seed});
    const SparseOccupancy in = encoder_input(m, p);
    EXPECT_EQ(in.size(), p.level(0).size() - m.at(0).masked.size());
    for (const Coord& c : m.at(0).masked) EXPECT_FALSE(in.contains(c));
    for (std::size_t n = 0; n < in.size(); ++n)
      EXPECT_EQ(in.payloads()[n], p.level(0).payloads()[p.level(0).find(in.coords()[n])]);
  }
}

TEST(MaskDraw, DeterministicUniform) {
  double sum = 0;
  for (int n = 0; n < 10000; ++n) {
    const double u = mask_draw(7, 1, {n, -n, 3});
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    EXPECT_EQ(u, mask_draw(7, 1, {n, -n, 3}));
    sum += u;
  }
  EXPECT_NEAR(sum / 10000, 0.5, 0.02);
  EXPECT_NE(mask_draw(7, 1, {0, 0, 0}), mask_draw(7, 2, {0, 0, 0}));
}

TEST(Strategy, NamesRoundTrip) {
  for (MaskStrategy st : {MaskStrategy::Hmg, MaskStrategy::NaivePoolUp, MaskStrategy::CoarseUpsample})
    EXPECT_EQ(parse_mask_strategy(to_string(st)), st);
  EXPECT_THROW(parse_mask_strategy("random"), Error);
  EXPECT_THROW(MaskingConfig({1.5, MaskStrategy::Hmg, 0}).validate(), Error);
}

}  // namespace
}  // namespace nomae
