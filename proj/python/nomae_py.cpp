#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "nomae/commands.hpp"
#include "nomae/data.hpp"
#include "nomae/error.hpp"
#include "nomae/gradcheck.hpp"
#include "nomae/masking.hpp"
#include "nomae/neighborhood.hpp"

namespace py = pybind11;
using namespace nomae;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int32_t, py::array::c_style | py::array::forcecast>;

PointCloud cloud_from(const FloatArray& pts) {
  if (pts.ndim() != 2 || (pts.shape(1) != 3 && pts.shape(1) != 4))
    throw py::value_error("points must have shape (N, 3) or (N, 4)");
  const auto a = pts.unchecked<2>();
  PointCloud c;
  c.points.resize(static_cast<std::size_t>(a.shape(0)));
  for (py::ssize_t n = 0; n < a.shape(0); ++n)
    c.points[n] = {a(n, 0), a(n, 1), a(n, 2), a.shape(1) == 4 ? a(n, 3) : 0.f};
  return c;
}

FloatArray cloud_to(const PointCloud& c) {
  FloatArray out({static_cast<py::ssize_t>(c.size()), py::ssize_t{4}});
  auto a = out.mutable_unchecked<2>();
  for (std::size_t n = 0; n < c.size(); ++n) {
    const Point3& p = c.points[n];
    a(n, 0) = p.x, a(n, 1) = p.y, a(n, 2) = p.z, a(n, 3) = p.intensity;
  }
  return out;
}

std::vector<Coord> coords_from(const IntArray& arr) {
  if (arr.ndim() != 2 || arr.shape(1) != 3) throw py::value_error("coords must have shape (N, 3)");
  const auto a = arr.unchecked<2>();
  std::vector<Coord> out(static_cast<std::size_t>(a.shape(0)));
  for (py::ssize_t n = 0; n < a.shape(0); ++n) out[n] = {a(n, 0), a(n, 1), a(n, 2)};
  return out;
}

IntArray coords_to(std::span<const Coord> cs) {
  IntArray out({static_cast<py::ssize_t>(cs.size()), py::ssize_t{3}});
  auto a = out.mutable_unchecked<2>();
  for (std::size_t n = 0; n < cs.size(); ++n) a(n, 0) = cs[n].i, a(n, 1) = cs[n].j, a(n, 2) = cs[n].k;
  return out;
}

VoxelPyramid pyramid_of(const FloatArray& pts, double base_size, int num_scales) {
  return build_pyramid(voxelize(cloud_from(pts), base_size).occupancy, num_scales);
}

}  // namespace

PYBIND11_MODULE(_nomae, m) {
  m.doc() = "Voxel pyramids, hierarchical masks and neighborhood occupancy targets";

  py::register_exception<Error>(m, "NomaeError", PyExc_RuntimeError);

  m.def("synth_scene", [](uint64_t seed, int azimuth_rays, int elevation_rays, double max_range) {
    SceneConfig cfg;
    cfg.seed = seed;
    cfg.azimuth_rays = azimuth_rays;
    cfg.elevation_rays = elevation_rays;
    cfg.max_range = max_range;
    return cloud_to(synth_scene(cfg));
  }, py::arg("seed") = 0, py::arg("azimuth_rays") = 1440, py::arg("elevation_rays") = 32, py::arg("max_range") = 50.0,
     "Synthetic LiDAR frame as an (N, 4) float32 array of x, y, z, intensity.");

  m.def("load_points", [](const std::filesystem::path& path, const std::string& format) {
    return cloud_to(load_points(path, parse_point_format(format)));
  }, py::arg("path"), py::arg("format") = "bin_xyzi");

  m.def("save_points", [](const std::filesystem::path& path, const FloatArray& pts, const std::string& format) {
    save_points(path, cloud_from(pts), parse_point_format(format));
  }, py::arg("path"), py::arg("points"), py::arg("format") = "bin_xyzi");

  m.def("voxelize", [](const FloatArray& pts, double base_size) {
    const Voxelization v = voxelize(cloud_from(pts), base_size);
    py::array_t<uint32_t> counts(static_cast<py::ssize_t>(v.occupancy.size()));
    auto c = counts.mutable_unchecked<1>();
    for (std::size_t n = 0; n < v.occupancy.size(); ++n) c(n) = v.occupancy.payloads()[n].count;
    py::array_t<uint32_t> point_voxel(static_cast<py::ssize_t>(v.point_voxel.size()), v.point_voxel.data());
    return py::make_tuple(coords_to(v.occupancy.coords()), counts, point_voxel);
  }, py::arg("points"), py::arg("base_size") = kDefaultBaseSize,
     "Returns (coords (M, 3) int32 sorted, counts (M,), voxel index per point (N,)).");

  m.def("pyramid", [](const FloatArray& pts, double base_size, int num_scales) {
    const VoxelPyramid p = pyramid_of(pts, base_size, num_scales);
    py::list levels;
    for (int s = 0; s < p.num_scales(); ++s) levels.append(coords_to(p.level(s).coords()));
    return levels;
  }, py::arg("points"), py::arg("base_size") = kDefaultBaseSize, py::arg("num_scales") = 4);

  m.def("hmg_ratio_for_total", &hmg_ratio_for_total, py::arg("total"), py::arg("num_scales") = 4, py::arg("scale") = 0);
  m.def("expected_total_ratio", [](double r, int num_scales, int scale, bool extra_round) {
    return expected_total_ratio(r, num_scales, scale, extra_round ? RatioFormula::ExtraRound : RatioFormula::Simulated);
  }, py::arg("r"), py::arg("num_scales"), py::arg("scale"), py::arg("extra_round") = false);

  m.def("generate_mask", [](const FloatArray& pts, double total_ratio, const std::string& strategy, uint64_t seed,
                            double base_size, int num_scales) {
    const VoxelPyramid p = pyramid_of(pts, base_size, num_scales);
    const MaskAssignment a =
        generate_mask(p, masking_for_total(parse_mask_strategy(strategy), total_ratio, num_scales, seed));
    py::list out;
    for (const ScaleMask& sm : a.scales) out.append(py::make_tuple(coords_to(sm.visible), coords_to(sm.masked)));
    return out;
  }, py::arg("points"), py::arg("total_ratio") = 0.7, py::arg("strategy") = "hmg", py::arg("seed") = 0,
     py::arg("base_size") = kDefaultBaseSize, py::arg("num_scales") = 4,
     "Per scale (finest first) a (visible, masked) pair of sorted coordinate arrays.");

  m.def("dilate", [](const IntArray& coords, int radius) {
    const std::vector<Coord> c = coords_from(coords);
    return coords_to(dilate(c, radius));
  }, py::arg("coords"), py::arg("radius"));

  m.def("build_targets", [](const FloatArray& pts, double total_ratio, int side, uint64_t seed, double base_size,
                            int num_scales) {
    const VoxelPyramid p = pyramid_of(pts, base_size, num_scales);
    const MaskAssignment a = hmg_generate(p, masking_for_total(MaskStrategy::Hmg, total_ratio, num_scales, seed));
    const TargetSet t = build_targets(a, p, NeighborhoodSpec::uniform(num_scales, side));
    const auto acc = recovered_lost_accounting(a, t);
    py::list out;
    for (int s = 0; s < num_scales; ++s) {
      const auto& st = t.scales[s];
      py::array_t<uint8_t> labels(static_cast<py::ssize_t>(st.labels.size()), st.labels.data());
      py::dict d;
      d["coords"] = coords_to(st.coords);
      d["labels"] = labels;
      d["recovered_fraction"] = acc[s].recovered_fraction;
      out.append(d);
    }
    return out;
  }, py::arg("points"), py::arg("total_ratio") = 0.7, py::arg("side") = 9, py::arg("seed") = 0,
     py::arg("base_size") = kDefaultBaseSize, py::arg("num_scales") = 4);

  m.def("gradcheck", [] {
    py::list out;
    for (const GradcheckResult& r : run_gradchecks(GradcheckOptions{}))
      out.append(py::make_tuple(r.op, r.max_rel_error, r.passed));
    return out;
  }, "(op, max relative error, passed) for every differentiable op and the assembled model.");

  m.def("run_command", [](const std::string& name, std::optional<std::filesystem::path> config,
                          std::optional<std::filesystem::path> out, std::optional<uint64_t> seed,
                          std::optional<int64_t> steps, bool overfit_one) {
    CommandOptions opts;
    opts.config = std::move(config);
    opts.out = std::move(out);
    opts.seed = seed;
    opts.steps = steps;
    opts.overfit_one = overfit_one;
    std::ostringstream log, err;
    int code;
    {
      py::gil_scoped_release release;
      code = run_command(name, opts, log, err);
    }
    return py::make_tuple(code, log.str(), err.str());
  }, py::arg("name"), py::arg("config") = py::none(), py::arg("out") = py::none(), py::arg("seed") = py::none(),
     py::arg("steps") = py::none(), py::arg("overfit_one") = false,
     "Same commands as the CLI; returns (exit code, log, errors).");
}
