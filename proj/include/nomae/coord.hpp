#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace nomae {

// Integer grid cell. Scale is tracked by the owning container.
struct Coord {
  int32_t i = 0;
  int32_t j = 0;
  int32_t k = 0;

  friend constexpr auto operator<=>(const Coord&, const Coord&) = default;

  constexpr Coord operator+(const Coord& o) const { return {i + o.i, j + o.j, k + o.k}; }
  constexpr Coord operator-(const Coord& o) const { return {i - o.i, j - o.j, k - o.k}; }
};

// Grid cell tagged with its pyramid scale.
struct VoxelCoord {
  Coord ijk;
  int scale = 0;

  friend constexpr auto operator<=>(const VoxelCoord&, const VoxelCoord&) = default;
};

// Arithmetic shift on signed integers is floor division by two in C++20.
constexpr Coord parent_of(Coord c) { return {c.i >> 1, c.j >> 1, c.k >> 1}; }

constexpr int32_t chebyshev_distance(Coord a, Coord b) {
  auto absd = [](int32_t x) { return x < 0 ? -x : x; };
  int32_t d = absd(a.i - b.i);
  if (absd(a.j - b.j) > d) d = absd(a.j - b.j);
  if (absd(a.k - b.k) > d) d = absd(a.k - b.k);
  return d;
}

// Coordinates are packed into 21 bits per axis for hashing. Voxelization keeps
// cells within +-kCoordLimit so that dilation margins never overflow the pack.
inline constexpr int32_t kCoordLimit = 1 << 19;

constexpr uint64_t pack_coord(Coord c) {
  constexpr int64_t bias = int64_t{1} << 20;
  return (static_cast<uint64_t>(c.i + bias) << 42) | (static_cast<uint64_t>(c.j + bias) << 21) |
         static_cast<uint64_t>(c.k + bias);
}

// Cube offsets with Chebyshev radius `reach`, in lexicographic (di, dj, dk) order.
std::vector<Coord> cube_offsets(int reach);

// Open-addressing hash map from coordinate to a 32-bit index.
class CoordIndex {
 public:
  static constexpr uint32_t kNotFound = std::numeric_limits<uint32_t>::max();

  CoordIndex() = default;
  explicit CoordIndex(std::size_t expected);

  // Returns false if the coordinate is already present (value untouched).
  bool insert(Coord c, uint32_t value);
  uint32_t find(Coord c) const;
  bool contains(Coord c) const { return find(c) != kNotFound; }
  std::size_t size() const { return size_; }

 private:
  void rehash(std::size_t capacity);
  std::size_t slot_for(uint64_t key) const;

  static constexpr uint64_t kEmpty = std::numeric_limits<uint64_t>::max();
  std::vector<uint64_t> keys_;
  std::vector<uint32_t> values_;
  std::size_t size_ = 0;
  int shift_ = 64;
};

// Sorted, duplicate-free coordinate list with O(1) expected lookup.
class CoordTable {
 public:
  CoordTable() = default;
  // Sorts and removes duplicates.
  explicit CoordTable(std::vector<Coord> coords);

  std::size_t size() const { return coords_.size(); }
  bool empty() const { return coords_.empty(); }
  const Coord& operator[](std::size_t idx) const { return coords_[idx]; }
  std::span<const Coord> coords() const { return coords_; }
  auto begin() const { return coords_.begin(); }
  auto end() const { return coords_.end(); }

  uint32_t find(Coord c) const { return index_.find(c); }
  bool contains(Coord c) const { return index_.contains(c); }

  friend bool operator==(const CoordTable& a, const CoordTable& b) { return a.coords_ == b.coords_; }

 private:
  std::vector<Coord> coords_;
  CoordIndex index_;
};

}  // namespace nomae
