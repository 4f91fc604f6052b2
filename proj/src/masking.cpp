#include "nomae/masking.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "nomae/error.hpp"

namespace nomae {

std::string_view to_string(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::Hmg: return "hmg";
    case MaskStrategy::NaivePoolUp: return "naive";
    case MaskStrategy::CoarseUpsample: return "upsample";
  }
  return "unknown";
}

MaskStrategy parse_mask_strategy(std::string_view name) {
  if (name == "hmg") return MaskStrategy::Hmg;
  if (name == "naive") return MaskStrategy::NaivePoolUp;
  if (name == "upsample") return MaskStrategy::CoarseUpsample;
  fail(ErrorKind::InvalidConfig, "unknown masking strategy '" + std::string(name) + "'");
}

void MaskingConfig::validate() const {
  require(ratio >= 0.0 && ratio < 1.0, ErrorKind::InvalidConfig, "masking ratio must lie in [0, 1)");
}

const ScaleMask& MaskAssignment::at(int s) const {
  require(s >= 0 && s < num_scales(), ErrorKind::InvalidScale, "mask scale " + std::to_string(s) + " out of range");
  return scales[static_cast<std::size_t>(s)];
}

namespace {

constexpr uint64_t splitmix(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

void check_pyramid(const VoxelPyramid& pyramid) {
  require(pyramid.num_scales() >= 1, ErrorKind::EmptyInput, "pyramid has no levels");
  for (int s = 0; s < pyramid.num_scales(); ++s)
    require(!pyramid.level(s).empty(), ErrorKind::EmptyInput, "pyramid level " + std::to_string(s) + " is empty");
}

ScaleMask finalize(const SparseOccupancy& level, std::vector<uint8_t> flags) {
  ScaleMask out;
  const auto coords = level.coords();
  for (std::size_t n = 0; n < coords.size(); ++n) (flags[n] ? out.masked : out.visible).push_back(coords[n]);
  out.masked_flag = std::move(flags);
  return out;
}

// Each fine voxel's state copied from its parent, optionally re-drawn when the
// parent is visible.
std::vector<uint8_t> descend(const SparseOccupancy& fine, const SparseOccupancy& coarse,
                             const std::vector<uint8_t>& coarse_flags, bool redraw, const MaskingConfig& cfg) {
  const auto coords = fine.coords();
  std::vector<uint8_t> flags(coords.size(), 0);
  for (std::size_t n = 0; n < coords.size(); ++n) {
    const uint32_t p = coarse.find(parent_of(coords[n]));
    if (p == CoordIndex::kNotFound) fail(ErrorKind::MissingParent, "pyramid is not closed under pooling");
    if (coarse_flags[p])
      flags[n] = 1;
    else if (redraw)
      flags[n] = mask_draw(cfg.seed, fine.scale(), coords[n]) < cfg.ratio ? 1 : 0;
  }
  return flags;
}

std::vector<uint8_t> draw_level(const SparseOccupancy& level, const MaskingConfig& cfg) {
  const auto coords = level.coords();
  std::vector<uint8_t> flags(coords.size());
  for (std::size_t n = 0; n < coords.size(); ++n)
    flags[n] = mask_draw(cfg.seed, level.scale(), coords[n]) < cfg.ratio ? 1 : 0;
  return flags;
}

MaskAssignment top_down(const VoxelPyramid& pyramid, const MaskingConfig& cfg, bool redraw) {
  check_pyramid(pyramid);
  cfg.validate();
  const int S = pyramid.num_scales();
  MaskAssignment out;
  out.scales.resize(static_cast<std::size_t>(S));
  std::vector<uint8_t> flags = draw_level(pyramid.level(S - 1), cfg);
  for (int s = S - 1; s >= 0; --s) {
    if (s < S - 1) flags = descend(pyramid.level(s), pyramid.level(s + 1), out.scales[s + 1].masked_flag, redraw, cfg);
    out.scales[static_cast<std::size_t>(s)] = finalize(pyramid.level(s), std::move(flags));
  }
  return out;
}

}  // namespace

double mask_draw(uint64_t seed, int scale, Coord c) {
  uint64_t h = splitmix(seed ^ 0x6A09E667F3BCC909ull);
  h = splitmix(h ^ static_cast<uint64_t>(static_cast<uint32_t>(scale)));
  h = splitmix(h ^ pack_coord(c));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

MaskAssignment hmg_generate(const VoxelPyramid& pyramid, const MaskingConfig& cfg) {
  return top_down(pyramid, cfg, /*redraw=*/true);
}

MaskAssignment upsample_generate(const VoxelPyramid& pyramid, const MaskingConfig& cfg) {
  return top_down(pyramid, cfg, /*redraw=*/false);
}

MaskAssignment naive_generate(const VoxelPyramid& pyramid, const MaskingConfig& cfg) {
  check_pyramid(pyramid);
  require(cfg.ratio >= 0.0 && cfg.ratio <= 1.0, ErrorKind::InvalidConfig, "masking ratio must lie in [0, 1]");
  const int S = pyramid.num_scales();
  MaskAssignment out;
  out.scales.resize(static_cast<std::size_t>(S));
  std::vector<uint8_t> flags = draw_level(pyramid.level(0), cfg);
  for (int s = 0; s < S; ++s) {
    if (s > 0) {
      const SparseOccupancy& fine = pyramid.level(s - 1);
      const SparseOccupancy& coarse = pyramid.level(s);
      const auto& fine_flags = out.scales[s - 1].masked_flag;
      flags.assign(coarse.size(), 1);
      const auto coords = fine.coords();
      for (std::size_t n = 0; n < coords.size(); ++n)
        if (!fine_flags[n]) flags[coarse.find(parent_of(coords[n]))] = 0;
    }
    out.scales[static_cast<std::size_t>(s)] = finalize(pyramid.level(s), std::move(flags));
  }
  return out;
}

MaskAssignment generate_mask(const VoxelPyramid& pyramid, const MaskingConfig& cfg) {
  switch (cfg.strategy) {
    case MaskStrategy::Hmg: return hmg_generate(pyramid, cfg);
    case MaskStrategy::NaivePoolUp: return naive_generate(pyramid, cfg);
    case MaskStrategy::CoarseUpsample: return upsample_generate(pyramid, cfg);
  }
  fail(ErrorKind::InvalidConfig, "unknown masking strategy");
}

double expected_total_ratio(double r, int num_scales, int scale, RatioFormula variant) {
  require(r >= 0.0 && r < 1.0, ErrorKind::InvalidConfig, "ratio must lie in [0, 1)");
  require(num_scales >= 1 && scale >= 0 && scale < num_scales, ErrorKind::InvalidConfig, "scale out of range");
  const int rounds = variant == RatioFormula::ExtraRound ? num_scales - scale + 1 : num_scales - scale;
  return 1.0 - std::pow(1.0 - r, rounds);
}

double hmg_ratio_for_total(double total, int num_scales, int scale) {
  require(total >= 0.0 && total < 1.0, ErrorKind::InvalidConfig, "total ratio must lie in [0, 1)");
  require(num_scales >= 1 && scale >= 0 && scale < num_scales, ErrorKind::InvalidConfig, "scale out of range");
  return 1.0 - std::pow(1.0 - total, 1.0 / (num_scales - scale));
}

MaskingConfig masking_for_total(MaskStrategy strategy, double total, int num_scales, uint64_t seed) {
  MaskingConfig cfg;
  cfg.strategy = strategy;
  cfg.seed = seed;
  cfg.ratio = strategy == MaskStrategy::Hmg ? hmg_ratio_for_total(total, num_scales) : total;
  return cfg;
}

std::vector<ScaleMaskStats> mask_stats(const MaskAssignment& assignment, const VoxelPyramid& pyramid,
                                       double per_round_ratio) {
  require(assignment.num_scales() == pyramid.num_scales(), ErrorKind::InvalidConfig,
          "mask and pyramid scale counts differ");
  const int S = pyramid.num_scales();
  std::vector<ScaleMaskStats> out;
  for (int s = 0; s < S; ++s) {
    const ScaleMask& m = assignment.at(s);
    require(m.masked_flag.size() == pyramid.level(s).size(), ErrorKind::InvalidConfig,
            "mask does not cover pyramid level " + std::to_string(s));
    ScaleMaskStats st;
    st.scale = s;
    st.occupied = pyramid.level(s).size();
    st.masked = m.masked.size();
    st.ratio = st.occupied == 0 ? 0.0 : static_cast<double>(st.masked) / static_cast<double>(st.occupied);
    st.extra_round = expected_total_ratio(per_round_ratio, S, s, RatioFormula::ExtraRound);
    st.simulated = expected_total_ratio(per_round_ratio, S, s, RatioFormula::Simulated);
    out.push_back(st);
  }
  return out;
}

void write_mask_stats_text(std::ostream& os, const std::vector<ScaleMaskStats>& stats) {
  os << std::fixed << std::setprecision(4);
  for (const auto& st : stats)
    os << "scale " << st.scale << ": occupied " << st.occupied << ", masked " << st.masked << ", ratio " << st.ratio
       << " (predicted " << st.simulated << " simulated, " << st.extra_round << " with one extra round)\n";
  os.unsetf(std::ios::floatfield);
}

void write_mask_stats_csv(std::ostream& os, const std::vector<ScaleMaskStats>& stats) {
  os << "scale,occupied,masked,ratio,pred_extra_round,pred_simulated\n";
  os << std::setprecision(8);
  for (const auto& st : stats)
    os << st.scale << ',' << st.occupied << ',' << st.masked << ',' << st.ratio << ',' << st.extra_round << ','
       << st.simulated << '\n';
}

SparseOccupancy encoder_input(const MaskAssignment& assignment, const VoxelPyramid& pyramid) {
  require(assignment.num_scales() == pyramid.num_scales() && assignment.num_scales() > 0, ErrorKind::InvalidConfig,
          "mask and pyramid scale counts differ");
  const ScaleMask& m = assignment.at(0);
  const SparseOccupancy& level = pyramid.level(0);
  require(!m.visible.empty(), ErrorKind::EmptyInput, "no visible voxels at the finest scale");
  std::vector<VoxelPayload> payloads;
  payloads.reserve(m.visible.size());
  for (const Coord& c : m.visible) payloads.push_back(level.payloads()[level.find(c)]);
  // m.visible is sorted and unique, so the table preserves payload alignment.
  return SparseOccupancy(0, level.voxel_size(), level.origin(), CoordTable(m.visible), std::move(payloads));
}

}  // namespace nomae
