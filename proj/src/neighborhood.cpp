#include "nomae/neighborhood.hpp"

#include <algorithm>
#include <ostream>

#include "nomae/error.hpp"

namespace nomae {

int NeighborhoodSpec::radius(int s) const {
  require(s >= 0 && s < num_scales(), ErrorKind::InvalidScale, "neighborhood scale out of range");
  return (side[static_cast<std::size_t>(s)] - 1) / 2;
}

void NeighborhoodSpec::validate() const {
  require(!side.empty(), ErrorKind::InvalidConfig, "neighborhood spec is empty");
  for (int n : side)
    require(n >= 3 && n % 2 == 1, ErrorKind::InvalidConfig,
            "neighborhood side must be odd and >= 3, got " + std::to_string(n));
}

std::vector<Coord> dilate(std::span<const Coord> visible, int radius) {
  require(!visible.empty(), ErrorKind::EmptyInput, "cannot dilate an empty visible set");
  require(radius >= 1, ErrorKind::InvalidConfig, "dilation radius must be >= 1");
  CoordIndex seen(visible.size() * 8);
  for (const Coord& c : visible) seen.insert(c, 0);
  const std::vector<Coord> offsets = cube_offsets(radius);
  std::vector<Coord> out;
  for (const Coord& c : visible)
    for (const Coord& d : offsets) {
      const Coord u = c + d;
      if (seen.insert(u, 1)) out.push_back(u);
    }
  std::sort(out.begin(), out.end());
  return out;
}

TargetSet build_targets(const MaskAssignment& assignment, const VoxelPyramid& pyramid, const NeighborhoodSpec& spec) {
  spec.validate();
  const int S = pyramid.num_scales();
  require(assignment.num_scales() == S && spec.num_scales() == S, ErrorKind::InvalidConfig,
          "mask, pyramid and neighborhood scale counts differ");
  TargetSet out;
  out.scales.resize(static_cast<std::size_t>(S));
  for (int s = 0; s < S; ++s) {
    const ScaleMask& m = assignment.at(s);
    if (m.visible.empty()) fail(ErrorKind::EmptyInput, "no visible voxels at scale " + std::to_string(s));
    ScaleTargets& t = out.scales[static_cast<std::size_t>(s)];
    t.coords = dilate(m.visible, spec.radius(s));
    t.labels.resize(t.coords.size());
    const SparseOccupancy& level = pyramid.level(s);
    for (std::size_t n = 0; n < t.coords.size(); ++n) t.labels[n] = level.contains(t.coords[n]) ? 1 : 0;
  }
  return out;
}

std::vector<RecoveryStats> recovered_lost_accounting(const MaskAssignment& assignment, const TargetSet& targets) {
  require(assignment.num_scales() == targets.num_scales(), ErrorKind::InvalidConfig, "scale counts differ");
  std::vector<RecoveryStats> out;
  for (int s = 0; s < targets.num_scales(); ++s) {
    const auto& masked = assignment.at(s).masked;
    const auto& coords = targets.scales[static_cast<std::size_t>(s)].coords;
    RecoveryStats st;
    st.scale = s;
    st.masked = masked.size();
    for (const Coord& c : masked)
      if (std::binary_search(coords.begin(), coords.end(), c)) ++st.recovered;
    st.lost = st.masked - st.recovered;
    st.recovered_fraction = st.masked == 0 ? 1.0 : static_cast<double>(st.recovered) / static_cast<double>(st.masked);
    out.push_back(st);
  }
  return out;
}

std::vector<int> masked_distance(const ScaleMask& mask, int max_radius) {
  require(max_radius >= 1, ErrorKind::InvalidConfig, "radius must be >= 1");
  const CoordTable visible(mask.visible);
  // Shells of equal Chebyshev radius, nearest first.
  std::vector<std::vector<Coord>> shells(static_cast<std::size_t>(max_radius) + 1);
  for (const Coord& d : cube_offsets(max_radius))
    shells[static_cast<std::size_t>(chebyshev_distance(d, Coord{0, 0, 0}))].push_back(d);
  std::vector<int> out;
  out.reserve(mask.masked.size());
  for (const Coord& c : mask.masked) {
    int dist = max_radius + 1;
    for (int r = 1; r <= max_radius && dist > max_radius; ++r)
      for (const Coord& d : shells[static_cast<std::size_t>(r)])
        if (visible.contains(c + d)) {
          dist = r;
          break;
        }
    out.push_back(dist);
  }
  return out;
}

void write_targets_csv(std::ostream& os, const TargetSet& targets) {
  os << "s,i,j,k,label\n";
  for (int s = 0; s < targets.num_scales(); ++s) {
    const auto& t = targets.scales[static_cast<std::size_t>(s)];
    for (std::size_t n = 0; n < t.coords.size(); ++n)
      os << s << ',' << t.coords[n].i << ',' << t.coords[n].j << ',' << t.coords[n].k << ','
         << static_cast<int>(t.labels[n]) << '\n';
  }
}

}  // namespace nomae
