#include "nomae/data.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <iterator>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "nomae/error.hpp"

namespace nomae {

PointFormat parse_point_format(std::string_view name) {
  if (name == "bin_xyzi") return PointFormat::BinXyzi;
  if (name == "ascii_xyz") return PointFormat::AsciiXyz;
  fail(ErrorKind::InvalidConfig, "unknown point format '" + std::string(name) + "'");
}

// ------------------------------------------------------------------ file I/O

namespace {

float read_f32_le(const unsigned char* p) {
  const uint32_t bits = static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
                        (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

void write_f32_le(std::ostream& os, float v) {
  const uint32_t bits = std::bit_cast<uint32_t>(v);
  const char buf[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                       static_cast<char>((bits >> 16) & 0xFF), static_cast<char>((bits >> 24) & 0xFF)};
  os.write(buf, 4);
}

PointCloud read_bin(std::istream& is) {
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() % 16 != 0)
    fail(ErrorKind::FormatError, "bin_xyzi payload of " + std::to_string(bytes.size()) +
                                     " bytes is not a multiple of 16");
  PointCloud cloud;
  cloud.points.resize(bytes.size() / 16);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (Point3& pt : cloud.points) {
    pt = {read_f32_le(p), read_f32_le(p + 4), read_f32_le(p + 8), read_f32_le(p + 12)};
    p += 16;
  }
  return cloud;
}

PointCloud read_ascii(std::istream& is) {
  PointCloud cloud;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::string tok;
    double v[4] = {0, 0, 0, 0};
    int n = 0;
    while (tokens >> tok) {
      if (n == 4) fail(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": too many values");
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v[n]);
      if (ec != std::errc() || ptr != tok.data() + tok.size())
        fail(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": '" + tok + "' is not a number");
      ++n;
    }
    if (n == 0) continue;
    if (n < 3) fail(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": expected x y z");
    cloud.points.push_back({static_cast<float>(v[0]), static_cast<float>(v[1]), static_cast<float>(v[2]),
                            static_cast<float>(v[3])});
  }
  return cloud;
}

}  // namespace

PointCloud read_points(std::istream& is, PointFormat format) {
  return format == PointFormat::BinXyzi ? read_bin(is) : read_ascii(is);
}

PointCloud load_points(const std::filesystem::path& path, PointFormat format) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::IoError, "cannot open '" + path.string() + "'");
  PointCloud cloud = read_points(is, format);
  cloud.frame_id = path.filename().string();
  return cloud;
}

void write_points(std::ostream& os, const PointCloud& cloud, PointFormat format) {
  if (format == PointFormat::BinXyzi) {
    for (const Point3& p : cloud.points) {
      write_f32_le(os, p.x);
      write_f32_le(os, p.y);
      write_f32_le(os, p.z);
      write_f32_le(os, p.intensity);
    }
  } else {
    os.precision(9);
    for (const Point3& p : cloud.points) os << p.x << ' ' << p.y << ' ' << p.z << '\n';
  }
  if (!os) fail(ErrorKind::IoError, "failed writing points");
}

void save_points(const std::filesystem::path& path, const PointCloud& cloud, PointFormat format) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorKind::IoError, "cannot open '" + path.string() + "' for writing");
  write_points(os, cloud, format);
}

// ------------------------------------------------------------------ synthesis

void SceneConfig::validate() const {
  require(ground_extent > 0 && sensor_height > 0 && max_range > 0, ErrorKind::InvalidConfig,
          "scene extents must be positive");
  require(azimuth_rays > 0 && elevation_rays > 0, ErrorKind::InvalidConfig, "ray counts must be positive");
  require(elevation_min_deg < elevation_max_deg, ErrorKind::InvalidConfig, "elevation range is empty");
  require(dropout >= 0.0 && dropout < 1.0, ErrorKind::InvalidConfig, "dropout must lie in [0, 1)");
  for (const IntRange& r : {boxes, walls, poles, spheres})
    require(r.lo >= 0 && r.lo <= r.hi, ErrorKind::InvalidConfig, "object count ranges must satisfy 0 <= lo <= hi");
}

namespace {

struct Ray {
  Vec3 o;
  Vec3 d;
};

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  float intensity = 0.f;
};

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int integer(IntRange r) { return r.lo + static_cast<int>(uniform() * (r.hi - r.lo + 1)); }

 private:
  std::mt19937_64 gen_;
};

// Oriented box resting on the ground, rotated by `yaw` about z.
struct Box {
  double cx, cy, yaw, hx, hy, height;
  float intensity;

  void intersect(const Ray& r, Hit& hit) const {
    const double c = std::cos(-yaw), s = std::sin(-yaw);
    const double ox = r.o[0] - cx, oy = r.o[1] - cy;
    const double lo[3] = {c * ox - s * oy, s * ox + c * oy, r.o[2]};
    const double ld[3] = {c * r.d[0] - s * r.d[1], s * r.d[0] + c * r.d[1], r.d[2]};
    const double bmin[3] = {-hx, -hy, 0.0}, bmax[3] = {hx, hy, height};
    double t0 = 0.0, t1 = hit.t;
    for (int a = 0; a < 3; ++a) {
      if (std::abs(ld[a]) < 1e-12) {
        if (lo[a] < bmin[a] || lo[a] > bmax[a]) return;
        continue;
      }
      double ta = (bmin[a] - lo[a]) / ld[a], tb = (bmax[a] - lo[a]) / ld[a];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return;
    }
    if (t0 > 1e-9 && t0 < hit.t) hit = {t0, intensity};
  }
};

struct Pole {
  double cx, cy, radius, height;
  float intensity;

  void intersect(const Ray& r, Hit& hit) const {
    const double ox = r.o[0] - cx, oy = r.o[1] - cy;
    const double a = r.d[0] * r.d[0] + r.d[1] * r.d[1];
    if (a < 1e-12) return;
    const double b = 2.0 * (ox * r.d[0] + oy * r.d[1]);
    const double c = ox * ox + oy * oy - radius * radius;
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) return;
    const double t = (-b - std::sqrt(disc)) / (2.0 * a);
    if (t <= 1e-9 || t >= hit.t) return;
    const double z = r.o[2] + t * r.d[2];
    if (z >= 0.0 && z <= height) hit = {t, intensity};
  }
};

struct Sphere {
  Vec3 c;
  double radius;
  float intensity;

  void intersect(const Ray& r, Hit& hit) const {
    const double ox = r.o[0] - c[0], oy = r.o[1] - c[1], oz = r.o[2] - c[2];
    const double b = ox * r.d[0] + oy * r.d[1] + oz * r.d[2];
    const double cc = ox * ox + oy * oy + oz * oz - radius * radius;
    const double disc = b * b - cc;
    if (disc < 0.0) return;
    const double t = -b - std::sqrt(disc);
    if (t > 1e-9 && t < hit.t) hit = {t, intensity};
  }
};

}  // namespace

PointCloud synth_scene(const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::vector<Box> boxes;
  std::vector<Pole> poles;
  std::vector<Sphere> spheres;

  // Rejection sampling; objects that do not fit within the extent are dropped.
  auto place = [&](double footprint) -> std::optional<std::pair<double, double>> {
    for (int attempt = 0; attempt < 256; ++attempt) {
      const double x = rng.uniform(-cfg.ground_extent, cfg.ground_extent);
      const double y = rng.uniform(-cfg.ground_extent, cfg.ground_extent);
      if (std::hypot(x, y) >= cfg.min_object_distance + footprint) return std::pair{x, y};
    }
    return std::nullopt;
  };

  const int n_boxes = rng.integer(cfg.boxes);
  for (int n = 0; n < n_boxes; ++n) {
    const double hx = rng.uniform(1.7, 2.5), hy = rng.uniform(0.8, 1.0), h = rng.uniform(1.4, 2.2);
    const auto at = place(hx);
    const double yaw = rng.uniform(0.0, std::numbers::pi);
    if (at) boxes.push_back({at->first, at->second, yaw, hx, hy, h, 0.6f});
  }
  const int n_walls = rng.integer(cfg.walls);
  for (int n = 0; n < n_walls; ++n) {
    const double hx = rng.uniform(4.0, 10.0), h = rng.uniform(2.5, 8.0);
    const auto at = place(hx);
    const double yaw = rng.uniform(0.0, std::numbers::pi);
    if (at) boxes.push_back({at->first, at->second, yaw, hx, 0.15, h, 0.4f});
  }
  const int n_poles = rng.integer(cfg.poles);
  for (int n = 0; n < n_poles; ++n) {
    const double radius = rng.uniform(0.08, 0.3), h = rng.uniform(3.0, 8.0);
    if (const auto at = place(radius)) poles.push_back({at->first, at->second, radius, h, 0.8f});
  }
  const int n_spheres = rng.integer(cfg.spheres);
  for (int n = 0; n < n_spheres; ++n) {
    const double radius = rng.uniform(0.5, 1.5);
    if (const auto at = place(radius)) spheres.push_back({{at->first, at->second, radius}, radius, 0.3f});
  }

  PointCloud cloud;
  cloud.frame_id = "synth-" + std::to_string(cfg.seed);
  const double deg = std::numbers::pi / 180.0;
  const Vec3 origin{0.0, 0.0, cfg.sensor_height};
  for (int e = 0; e < cfg.elevation_rays; ++e) {
    const double frac = cfg.elevation_rays == 1 ? 0.5 : static_cast<double>(e) / (cfg.elevation_rays - 1);
    const double el = (cfg.elevation_min_deg + frac * (cfg.elevation_max_deg - cfg.elevation_min_deg)) * deg;
    for (int a = 0; a < cfg.azimuth_rays; ++a) {
      // Draw unconditionally so the object layout fixes the sequence.
      const bool dropped = rng.uniform() < cfg.dropout;
      const double az = 2.0 * std::numbers::pi * a / cfg.azimuth_rays;
      const Ray ray{origin, {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)}};
      Hit hit;
      hit.t = cfg.max_range;
      if (ray.d[2] < 0.0) {
        const double t = -origin[2] / ray.d[2];
        if (t < hit.t) hit = {t, 0.2f};
      }
      for (const Box& b : boxes) b.intersect(ray, hit);
      for (const Pole& p : poles) p.intersect(ray, hit);
      for (const Sphere& s : spheres) s.intersect(ray, hit);
      if (dropped || hit.t >= cfg.max_range) continue;
      const float intensity = static_cast<float>(hit.intensity / (1.0 + 0.02 * hit.t));
      // Emitted in the sensor frame: the ground sits at z = -sensor_height.
      Point3 p{static_cast<float>(ray.o[0] + hit.t * ray.d[0]), static_cast<float>(ray.o[1] + hit.t * ray.d[1]),
               static_cast<float>(ray.o[2] + hit.t * ray.d[2] - cfg.sensor_height), intensity};
      cloud.points.push_back(p);
    }
  }
  return cloud;
}

// ------------------------------------------------------------------ augmentation

AugmentConfig AugmentConfig::none() {
  AugmentConfig cfg;
  cfg.rotate = cfg.scale = cfg.flip = cfg.jitter = false;
  return cfg;
}

void AugmentConfig::validate() const {
  require(rotate_range[0] <= rotate_range[1], ErrorKind::InvalidConfig, "rotate range is empty");
  require(scale_range[0] > 0.0 && scale_range[0] <= scale_range[1], ErrorKind::InvalidConfig,
          "scale range must be positive and ordered");
  require(jitter_sigma >= 0.0 && jitter_clip >= 0.0, ErrorKind::InvalidConfig, "jitter sigma and clip must be >= 0");
  for (double p : {rotate_prob, flip_prob})
    require(p >= 0.0 && p <= 1.0, ErrorKind::InvalidConfig, "probabilities must lie in [0, 1]");
}

PointCloud augment(const PointCloud& cloud, const AugmentConfig& cfg, uint64_t seed) {
  cfg.validate();
  std::mt19937_64 gen(seed);
  auto uniform = [&] { return static_cast<double>(gen() >> 11) * 0x1.0p-53; };

  PointCloud out = cloud;
  if (cfg.rotate && uniform() < cfg.rotate_prob) {
    const double angle = std::numbers::pi * (cfg.rotate_range[0] + uniform() * (cfg.rotate_range[1] - cfg.rotate_range[0]));
    const double c = std::cos(angle), s = std::sin(angle);
    for (Point3& p : out.points) {
      const double x = p.x, y = p.y;
      p.x = static_cast<float>(c * x - s * y);
      p.y = static_cast<float>(s * x + c * y);
    }
  }
  if (cfg.scale) {
    const double f = cfg.scale_range[0] + uniform() * (cfg.scale_range[1] - cfg.scale_range[0]);
    for (Point3& p : out.points) {
      p.x = static_cast<float>(p.x * f);
      p.y = static_cast<float>(p.y * f);
      p.z = static_cast<float>(p.z * f);
    }
  }
  if (cfg.flip) {
    const bool fx = uniform() < cfg.flip_prob;
    const bool fy = uniform() < cfg.flip_prob;
    for (Point3& p : out.points) {
      if (fx) p.x = -p.x;
      if (fy) p.y = -p.y;
    }
  }
  if (cfg.jitter && cfg.jitter_sigma > 0.0) {
    std::normal_distribution<double> normal(0.0, cfg.jitter_sigma);
    for (Point3& p : out.points) {
      p.x = static_cast<float>(p.x + std::clamp(normal(gen), -cfg.jitter_clip, cfg.jitter_clip));
      p.y = static_cast<float>(p.y + std::clamp(normal(gen), -cfg.jitter_clip, cfg.jitter_clip));
      p.z = static_cast<float>(p.z + std::clamp(normal(gen), -cfg.jitter_clip, cfg.jitter_clip));
    }
  }
  return out;
}

}  // namespace nomae
