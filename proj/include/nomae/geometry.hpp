#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nomae/coord.hpp"

namespace nomae {

using Vec3 = std::array<double, 3>;

struct Point3 {
  float x = 0.f;
  float y = 0.f;
  float z = 0.f;
  float intensity = 0.f;

  friend bool operator==(const Point3&, const Point3&) = default;
};

struct PointCloud {
  std::vector<Point3> points;
  std::optional<std::string> frame_id;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

// Per-voxel geometry: number of points and their mean position inside the
// voxel, in voxel units (each component in [0, 1)).
struct VoxelPayload {
  uint32_t count = 0;
  std::array<float, 3> offset{0.f, 0.f, 0.f};

  friend bool operator==(const VoxelPayload&, const VoxelPayload&) = default;
};

class SparseOccupancy {
 public:
  SparseOccupancy() = default;
  // `payloads` must be aligned with the sorted order of `table`.
  SparseOccupancy(int scale, double voxel_size, Vec3 origin, CoordTable table,
                  std::vector<VoxelPayload> payloads);

  int scale() const { return scale_; }
  double voxel_size() const { return voxel_size_; }
  const Vec3& origin() const { return origin_; }
  const CoordTable& table() const { return table_; }
  std::span<const Coord> coords() const { return table_.coords(); }
  const std::vector<VoxelPayload>& payloads() const { return payloads_; }

  std::size_t size() const { return table_.size(); }
  bool empty() const { return table_.empty(); }
  bool contains(Coord c) const { return table_.contains(c); }
  uint32_t find(Coord c) const { return table_.find(c); }
  uint64_t total_points() const;

  friend bool operator==(const SparseOccupancy& a, const SparseOccupancy& b) {
    return a.scale_ == b.scale_ && a.voxel_size_ == b.voxel_size_ && a.origin_ == b.origin_ &&
           a.table_ == b.table_ && a.payloads_ == b.payloads_;
  }

 private:
  int scale_ = 0;
  double voxel_size_ = 0.0;
  Vec3 origin_{0.0, 0.0, 0.0};
  CoordTable table_;
  std::vector<VoxelPayload> payloads_;
};

struct Voxelization {
  SparseOccupancy occupancy;
  std::vector<uint32_t> point_voxel;  // index into occupancy.coords() per input point
};

// Level 0 is the finest. Level s has voxel size base_size * 2^s.
struct VoxelPyramid {
  std::vector<SparseOccupancy> levels;
  double base_size = 0.0;
  Vec3 origin{0.0, 0.0, 0.0};

  int num_scales() const { return static_cast<int>(levels.size()); }
  const SparseOccupancy& level(int s) const;
};

inline constexpr double kDefaultBaseSize = 0.05;

Voxelization voxelize(const PointCloud& cloud, double base_size, const Vec3& origin = {0.0, 0.0, 0.0});

// Exact factor-2 pooling of one level into the next coarser one.
SparseOccupancy pool_occupancy(const SparseOccupancy& fine);

VoxelPyramid build_pyramid(const SparseOccupancy& finest, int num_scales);

VoxelCoord parent(const VoxelCoord& c, const VoxelPyramid& pyramid);
std::vector<Coord> children_occupied(const VoxelCoord& c, const VoxelPyramid& pyramid);

// Keeps points with lo <= p < hi componentwise, preserving order.
PointCloud clip_range(const PointCloud& cloud, const Vec3& lo, const Vec3& hi);

}  // namespace nomae
