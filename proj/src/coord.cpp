#include "nomae/coord.hpp"

#include <algorithm>
#include <bit>

namespace nomae {

std::vector<Coord> cube_offsets(int reach) {
  std::vector<Coord> out;
  if (reach < 0) return out;
  const int side = 2 * reach + 1;
  out.reserve(static_cast<std::size_t>(side) * side * side);
  for (int di = -reach; di <= reach; ++di)
    for (int dj = -reach; dj <= reach; ++dj)
      for (int dk = -reach; dk <= reach; ++dk) out.push_back({di, dj, dk});
  return out;
}

CoordIndex::CoordIndex(std::size_t expected) { rehash(std::max<std::size_t>(16, expected * 2)); }

std::size_t CoordIndex::slot_for(uint64_t key) const {
  return static_cast<std::size_t>((key * 0x9E3779B97F4A7C15ull) >> shift_);
}

void CoordIndex::rehash(std::size_t capacity) {
  capacity = std::bit_ceil(capacity);
  std::vector<uint64_t> old_keys = std::move(keys_);
  std::vector<uint32_t> old_values = std::move(values_);
  keys_.assign(capacity, kEmpty);
  values_.assign(capacity, 0);
  shift_ = 64 - std::countr_zero(capacity);
  const std::size_t mask = capacity - 1;
  for (std::size_t s = 0; s < old_keys.size(); ++s) {
    if (old_keys[s] == kEmpty) continue;
    std::size_t slot = slot_for(old_keys[s]);
    while (keys_[slot] != kEmpty) slot = (slot + 1) & mask;
    keys_[slot] = old_keys[s];
    values_[slot] = old_values[s];
  }
}

bool CoordIndex::insert(Coord c, uint32_t value) {
  if (keys_.empty() || (size_ + 1) * 2 > keys_.size()) rehash(std::max<std::size_t>(16, keys_.size() * 2));
  const uint64_t key = pack_coord(c);
  const std::size_t mask = keys_.size() - 1;
  std::size_t slot = slot_for(key);
  while (keys_[slot] != kEmpty) {
    if (keys_[slot] == key) return false;
    slot = (slot + 1) & mask;
  }
  keys_[slot] = key;
  values_[slot] = value;
  ++size_;
  return true;
}

uint32_t CoordIndex::find(Coord c) const {
  if (keys_.empty()) return kNotFound;
  const uint64_t key = pack_coord(c);
  const std::size_t mask = keys_.size() - 1;
  std::size_t slot = slot_for(key);
  while (keys_[slot] != kEmpty) {
    if (keys_[slot] == key) return values_[slot];
    slot = (slot + 1) & mask;
  }
  return kNotFound;
}

CoordTable::CoordTable(std::vector<Coord> coords) : coords_(std::move(coords)) {
  std::sort(coords_.begin(), coords_.end());
  coords_.erase(std::unique(coords_.begin(), coords_.end()), coords_.end());
  index_ = CoordIndex(coords_.size());
  for (std::size_t n = 0; n < coords_.size(); ++n) index_.insert(coords_[n], static_cast<uint32_t>(n));
}

}  // namespace nomae
