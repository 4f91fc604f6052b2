#include "nomae/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nomae/error.hpp"

namespace nomae {

SparseOccupancy::SparseOccupancy(int scale, double voxel_size, Vec3 origin, CoordTable table,
                                 std::vector<VoxelPayload> payloads)
    : scale_(scale),
      voxel_size_(voxel_size),
      origin_(origin),
      table_(std::move(table)),
      payloads_(std::move(payloads)) {
  require(payloads_.size() == table_.size(), ErrorKind::ShapeError, "payload count does not match coordinate count");
}

uint64_t SparseOccupancy::total_points() const {
  uint64_t total = 0;
  for (const auto& p : payloads_) total += p.count;
  return total;
}

const SparseOccupancy& VoxelPyramid::level(int s) const {
  require(s >= 0 && s < num_scales(), ErrorKind::InvalidScale, "scale " + std::to_string(s) + " out of range");
  return levels[static_cast<std::size_t>(s)];
}

namespace {

// Offsets are accumulated in 32.32 fixed point so the mean does not depend on
// point order.
constexpr double kFixedScale = 4294967296.0;

struct Accum {
  uint32_t count = 0;
  std::array<uint64_t, 3> sum{0, 0, 0};
};

}  // namespace

Voxelization voxelize(const PointCloud& cloud, double base_size, const Vec3& origin) {
  require(!cloud.empty(), ErrorKind::EmptyInput, "cannot voxelize an empty cloud");
  require(base_size > 0.0 && std::isfinite(base_size), ErrorKind::InvalidConfig, "base_size must be positive");
  require(cloud.size() < std::numeric_limits<uint32_t>::max(), ErrorKind::InvalidConfig, "too many points");

  std::vector<Coord> point_coord(cloud.size());
  std::vector<std::array<uint32_t, 3>> point_offset(cloud.size());
  for (std::size_t n = 0; n < cloud.size(); ++n) {
    const Point3& p = cloud.points[n];
    const std::array<double, 3> xyz{p.x, p.y, p.z};
    Coord c;
    std::array<int32_t*, 3> dst{&c.i, &c.j, &c.k};
    for (int a = 0; a < 3; ++a) {
      if (!std::isfinite(xyz[a])) fail(ErrorKind::InvalidPoint, "non-finite coordinate at point " + std::to_string(n));
      const double u = (xyz[a] - origin[a]) / base_size;
      const double cell = std::floor(u);
      if (std::abs(cell) >= kCoordLimit)
        fail(ErrorKind::InvalidPoint, "point " + std::to_string(n) + " lies outside the representable grid");
      *dst[a] = static_cast<int32_t>(cell);
      const double frac = std::clamp(u - cell, 0.0, std::nextafter(1.0, 0.0));
      point_offset[n][a] = static_cast<uint32_t>(frac * kFixedScale);
    }
    point_coord[n] = c;
  }

  CoordTable table(point_coord);
  std::vector<Accum> acc(table.size());
  std::vector<uint32_t> point_voxel(cloud.size());
  for (std::size_t n = 0; n < cloud.size(); ++n) {
    const uint32_t v = table.find(point_coord[n]);
    point_voxel[n] = v;
    acc[v].count += 1;
    for (int a = 0; a < 3; ++a) acc[v].sum[a] += point_offset[n][a];
  }

  std::vector<VoxelPayload> payloads(table.size());
  for (std::size_t v = 0; v < acc.size(); ++v) {
    payloads[v].count = acc[v].count;
    for (int a = 0; a < 3; ++a)
      payloads[v].offset[a] = static_cast<float>(static_cast<double>(acc[v].sum[a]) / acc[v].count / kFixedScale);
  }
  return {SparseOccupancy(0, base_size, origin, std::move(table), std::move(payloads)), std::move(point_voxel)};
}

SparseOccupancy pool_occupancy(const SparseOccupancy& fine) {
  std::vector<Coord> parents;
  parents.reserve(fine.size());
  for (const Coord& c : fine.coords()) parents.push_back(parent_of(c));
  CoordTable table(std::move(parents));

  std::vector<uint64_t> counts(table.size(), 0);
  std::vector<std::array<double, 3>> weighted(table.size(), {0.0, 0.0, 0.0});
  const auto coords = fine.coords();
  for (std::size_t n = 0; n < coords.size(); ++n) {
    const Coord c = coords[n];
    const Coord p = parent_of(c);
    const uint32_t v = table.find(p);
    const VoxelPayload& pay = fine.payloads()[n];
    const std::array<int32_t, 3> local{c.i - 2 * p.i, c.j - 2 * p.j, c.k - 2 * p.k};
    counts[v] += pay.count;
    for (int a = 0; a < 3; ++a) weighted[v][a] += pay.count * (0.5 * (pay.offset[a] + local[a]));
  }
  std::vector<VoxelPayload> payloads(table.size());
  for (std::size_t v = 0; v < table.size(); ++v) {
    payloads[v].count = static_cast<uint32_t>(counts[v]);
    for (int a = 0; a < 3; ++a) {
      const double mean = weighted[v][a] / static_cast<double>(counts[v]);
      payloads[v].offset[a] = std::min(static_cast<float>(mean), std::nextafter(1.0f, 0.0f));
    }
  }
  return SparseOccupancy(fine.scale() + 1, fine.voxel_size() * 2.0, fine.origin(), std::move(table),
                         std::move(payloads));
}

VoxelPyramid build_pyramid(const SparseOccupancy& finest, int num_scales) {
  require(num_scales >= 1, ErrorKind::InvalidConfig, "pyramid needs at least one scale");
  require(!finest.empty(), ErrorKind::EmptyInput, "finest level is empty");
  VoxelPyramid pyramid;
  pyramid.base_size = finest.voxel_size();
  pyramid.origin = finest.origin();
  pyramid.levels.reserve(static_cast<std::size_t>(num_scales));
  pyramid.levels.push_back(finest);
  for (int s = 1; s < num_scales; ++s) pyramid.levels.push_back(pool_occupancy(pyramid.levels.back()));
  return pyramid;
}

VoxelCoord parent(const VoxelCoord& c, const VoxelPyramid& pyramid) {
  require(c.scale >= 0 && c.scale + 1 < pyramid.num_scales(), ErrorKind::InvalidScale,
          "no parent scale above " + std::to_string(c.scale));
  return {parent_of(c.ijk), c.scale + 1};
}

std::vector<Coord> children_occupied(const VoxelCoord& c, const VoxelPyramid& pyramid) {
  require(c.scale >= 1 && c.scale < pyramid.num_scales(), ErrorKind::InvalidScale,
          "no child scale below " + std::to_string(c.scale));
  const SparseOccupancy& fine = pyramid.level(c.scale - 1);
  std::vector<Coord> out;
  const Coord base{2 * c.ijk.i, 2 * c.ijk.j, 2 * c.ijk.k};
  for (int32_t di = 0; di < 2; ++di)
    for (int32_t dj = 0; dj < 2; ++dj)
      for (int32_t dk = 0; dk < 2; ++dk) {
        const Coord child = base + Coord{di, dj, dk};
        if (fine.contains(child)) out.push_back(child);
      }
  return out;
}

PointCloud clip_range(const PointCloud& cloud, const Vec3& lo, const Vec3& hi) {
  for (int a = 0; a < 3; ++a)
    require(lo[a] < hi[a], ErrorKind::InvalidConfig, "clip range must satisfy min < max on every axis");
  PointCloud out;
  out.frame_id = cloud.frame_id;
  std::copy_if(cloud.points.begin(), cloud.points.end(), std::back_inserter(out.points), [&](const Point3& p) {
    return p.x >= lo[0] && p.x < hi[0] && p.y >= lo[1] && p.y < hi[1] && p.z >= lo[2] && p.z < hi[2];
  });
  return out;
}

}  // namespace nomae
