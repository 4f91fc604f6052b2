#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string_view>

#include "nomae/geometry.hpp"

namespace nomae {

enum class PointFormat {
  BinXyzi,   // little-endian f32 quadruples (x, y, z, intensity)
  AsciiXyz,  // "x y z" per line, '#' starts a comment
};

PointFormat parse_point_format(std::string_view name);

PointCloud read_points(std::istream& is, PointFormat format);
PointCloud load_points(const std::filesystem::path& path, PointFormat format);
void write_points(std::ostream& os, const PointCloud& cloud, PointFormat format);
void save_points(const std::filesystem::path& path, const PointCloud& cloud, PointFormat format);

struct IntRange {
  int lo = 0;
  int hi = 0;
};

// Ray-cast LiDAR stand-in: a spinning sensor over a ground plane with
// scattered boxes, walls, poles and spheres. Points are in the sensor frame.
struct SceneConfig {
  uint64_t seed = 0;
  double ground_extent = 40.0;  // objects are placed within +-extent in x and y
  IntRange boxes{6, 12};
  IntRange walls{2, 6};
  IntRange poles{6, 14};
  IntRange spheres{2, 6};
  double sensor_height = 1.8;
  int azimuth_rays = 1440;
  int elevation_rays = 32;
  double elevation_min_deg = -30.0;
  double elevation_max_deg = 10.0;
  double max_range = 50.0;
  double min_object_distance = 3.0;
  double dropout = 0.05;

  void validate() const;
};

PointCloud synth_scene(const SceneConfig& cfg);

// Defaults follow the pretraining augmentation table; flags toggle each stage.
struct AugmentConfig {
  bool rotate = true;
  double rotate_prob = 0.5;
  std::array<double, 2> rotate_range{-1.0, 1.0};  // fractions of pi
  bool scale = true;
  std::array<double, 2> scale_range{0.9, 1.1};
  bool flip = true;
  double flip_prob = 0.5;  // per horizontal axis
  bool jitter = true;
  double jitter_sigma = 0.005;
  double jitter_clip = 0.02;

  static AugmentConfig none();
  void validate() const;
};

// Applies rotate -> scale -> flip -> jitter.
PointCloud augment(const PointCloud& cloud, const AugmentConfig& cfg, uint64_t seed);

}  // namespace nomae
