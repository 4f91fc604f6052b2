#include "nomae/reference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include "nomae/error.hpp"
#include "nomae/masking.hpp"

namespace nomae::reference {

namespace {

int floor_half(int v) { return v < 0 ? -((-v + 1) / 2) : v / 2; }

std::tuple<int, int, int> key(const Coord& c) { return {c.i, c.j, c.k}; }

}  // namespace

std::vector<Coord> brute_dilate(std::span<const Coord> visible, int radius) {
  require(radius >= 1, ErrorKind::InvalidConfig, "dilation radius must be >= 1");
  require(!visible.empty(), ErrorKind::EmptyInput, "nothing to dilate");
  std::set<std::tuple<int, int, int>> vis, out;
  for (const Coord& v : visible) vis.insert(key(v));
  for (const Coord& v : visible)
    for (int a = -radius; a <= radius; ++a)
      for (int b = -radius; b <= radius; ++b)
        for (int c = -radius; c <= radius; ++c) {
          const auto t = std::make_tuple(v.i + a, v.j + b, v.k + c);
          if (!vis.count(t)) out.insert(t);
        }
  std::vector<Coord> result;
  for (const auto& [i, j, k] : out) result.push_back({i, j, k});
  return result;
}

SparseOccupancy brute_pool(const SparseOccupancy& fine) {
  struct Acc {
    uint64_t count = 0;
    double sum[3] = {0, 0, 0};
  };
  std::map<std::tuple<int, int, int>, Acc> groups;
  const auto coords = fine.coords();
  for (std::size_t n = 0; n < coords.size(); ++n) {
    const Coord& c = coords[n];
    const int p[3] = {floor_half(c.i), floor_half(c.j), floor_half(c.k)};
    const int q[3] = {c.i, c.j, c.k};
    Acc& acc = groups[{p[0], p[1], p[2]}];
    const VoxelPayload& pay = fine.payloads()[n];
    acc.count += pay.count;
    for (int a = 0; a < 3; ++a) acc.sum[a] += pay.count * ((q[a] - 2 * p[a]) + static_cast<double>(pay.offset[a])) / 2.0;
  }
  std::vector<Coord> out;
  std::vector<VoxelPayload> payloads;
  for (const auto& [k, acc] : groups) {
    out.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k)});
    VoxelPayload p;
    p.count = static_cast<uint32_t>(acc.count);
    for (int a = 0; a < 3; ++a) p.offset[a] = static_cast<float>(acc.sum[a] / static_cast<double>(acc.count));
    payloads.push_back(p);
  }
  return SparseOccupancy(fine.scale() + 1, fine.voxel_size() * 2.0, fine.origin(), CoordTable(std::move(out)),
                         std::move(payloads));
}

std::vector<RatioEstimate> monte_carlo_mask_ratio(const VoxelPyramid& pyramid, double r, int trials, uint64_t seed) {
  require(trials >= 1, ErrorKind::InvalidConfig, "need at least one trial");
  const int S = pyramid.num_scales();
  std::vector<std::vector<double>> samples(static_cast<std::size_t>(S));
  for (int t = 0; t < trials; ++t) {
    MaskingConfig cfg{r, MaskStrategy::Hmg, seed + static_cast<uint64_t>(t) * 0x9E3779B97F4A7C15ULL};
    const MaskAssignment m = hmg_generate(pyramid, cfg);
    for (int s = 0; s < S; ++s) {
      const auto& flags = m.at(s).masked_flag;
      const auto masked = std::count(flags.begin(), flags.end(), uint8_t{1});
      samples[static_cast<std::size_t>(s)].push_back(static_cast<double>(masked) / static_cast<double>(flags.size()));
    }
  }
  std::vector<RatioEstimate> out;
  for (const auto& xs : samples) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var = xs.size() > 1 ? var / static_cast<double>(xs.size() - 1) : 0.0;
    out.push_back({mean, std::sqrt(var)});
  }
  return out;
}

// ---------------------------------------------------------------- dense oracle

namespace {

struct Grid {
  int lo[3] = {0, 0, 0};
  int dim[3] = {0, 0, 0};
  int channels = 0;
  std::vector<double> f;
  std::vector<uint8_t> active;

  std::size_t cells() const { return static_cast<std::size_t>(dim[0]) * dim[1] * dim[2]; }

  long index(int i, int j, int k) const {
    const int a = i - lo[0], b = j - lo[1], c = k - lo[2];
    if (a < 0 || b < 0 || c < 0 || a >= dim[0] || b >= dim[1] || c >= dim[2]) return -1;
    return (static_cast<long>(a) * dim[1] + b) * dim[2] + c;
  }
  void cell_coord(std::size_t n, int out[3]) const {
    out[2] = lo[2] + static_cast<int>(n % static_cast<std::size_t>(dim[2]));
    out[1] = lo[1] + static_cast<int>((n / static_cast<std::size_t>(dim[2])) % static_cast<std::size_t>(dim[1]));
    out[0] = lo[0] + static_cast<int>(n / (static_cast<std::size_t>(dim[2]) * static_cast<std::size_t>(dim[1])));
  }
  double* at(std::size_t n) { return f.data() + n * static_cast<std::size_t>(channels); }
  const double* at(std::size_t n) const { return f.data() + n * static_cast<std::size_t>(channels); }
};

Grid empty_like(const Grid& shape, int channels) {
  Grid g;
  std::copy(shape.lo, shape.lo + 3, g.lo);
  std::copy(shape.dim, shape.dim + 3, g.dim);
  g.channels = channels;
  g.f.assign(g.cells() * static_cast<std::size_t>(channels), 0.0);
  g.active.assign(g.cells(), 0);
  return g;
}

const std::vector<double>& param(const Model<double>& model, const std::string& name) {
  return model.params().get(name).value;
}

int out_channels(const Model<double>& model, const std::string& name) {
  return static_cast<int>(model.params().get(name).shape.back());
}

// y[o] = b + sum over taps of W[tap]^T x[o + d] across active inputs, on the
// requested output activity.
Grid conv(const Model<double>& model, const std::string& prefix, const Grid& x, int reach,
          const std::vector<uint8_t>& out_active) {
  const auto& W = param(model, prefix + ".w");
  const auto& bias = param(model, prefix + ".b");
  const int cin = x.channels, cout = out_channels(model, prefix + ".w");
  const int side = 2 * reach + 1;
  Grid y = empty_like(x, cout);
  y.active = out_active;
  for (std::size_t n = 0; n < y.cells(); ++n) {
    if (!y.active[n]) continue;
    int c[3];
    y.cell_coord(n, c);
    double* out = y.at(n);
    for (int co = 0; co < cout; ++co) out[co] = bias[static_cast<std::size_t>(co)];
    for (int a = -reach; a <= reach; ++a)
      for (int b = -reach; b <= reach; ++b)
        for (int d = -reach; d <= reach; ++d) {
          const long q = x.index(c[0] + a, c[1] + b, c[2] + d);
          if (q < 0 || !x.active[static_cast<std::size_t>(q)]) continue;
          const std::size_t tap = static_cast<std::size_t>(((a + reach) * side + (b + reach)) * side + (d + reach));
          const double* in = x.at(static_cast<std::size_t>(q));
          for (int ci = 0; ci < cin; ++ci)
            for (int co = 0; co < cout; ++co)
              out[co] += in[ci] * W[(tap * static_cast<std::size_t>(cin) + static_cast<std::size_t>(ci)) *
                                        static_cast<std::size_t>(cout) +
                                    static_cast<std::size_t>(co)];
        }
  }
  return y;
}

std::vector<uint8_t> dilated_activity(const Grid& x, int reach) {
  std::vector<uint8_t> out(x.cells(), 0);
  for (std::size_t n = 0; n < x.cells(); ++n) {
    if (!x.active[n]) continue;
    int c[3];
    x.cell_coord(n, c);
    for (int a = -reach; a <= reach; ++a)
      for (int b = -reach; b <= reach; ++b)
        for (int d = -reach; d <= reach; ++d) {
          const long q = x.index(c[0] + a, c[1] + b, c[2] + d);
          if (q < 0) fail(ErrorKind::InvalidConfig, "dense oracle grid too small for the expansion");
          out[static_cast<std::size_t>(q)] = 1;
        }
  }
  return out;
}

void activate(Grid& x, nn::Activation act) {
  for (std::size_t n = 0; n < x.cells(); ++n) {
    double* v = x.at(n);
    for (int c = 0; c < x.channels; ++c) {
      if (!x.active[n]) {
        v[c] = 0.0;
        continue;
      }
      v[c] = act == nn::Activation::Relu ? std::max(v[c], 0.0) : 0.5 * v[c] * (1.0 + std::erf(v[c] / std::sqrt(2.0)));
    }
  }
}

Grid linear(const Model<double>& model, const std::string& prefix, const Grid& x) {
  const auto& W = param(model, prefix + ".w");
  const auto& bias = param(model, prefix + ".b");
  const int cin = x.channels, cout = out_channels(model, prefix + ".w");
  Grid y = empty_like(x, cout);
  y.active = x.active;
  for (std::size_t n = 0; n < y.cells(); ++n) {
    if (!y.active[n]) continue;
    double* out = y.at(n);
    const double* in = x.at(n);
    for (int co = 0; co < cout; ++co) {
      double acc = bias[static_cast<std::size_t>(co)];
      for (int ci = 0; ci < cin; ++ci)
        acc += in[ci] * W[static_cast<std::size_t>(ci) * static_cast<std::size_t>(cout) + static_cast<std::size_t>(co)];
      out[co] = acc;
    }
  }
  return y;
}

// Mean of active children into the coarser grid `shape`.
Grid pool(const Grid& fine, const Grid& shape) {
  Grid y = empty_like(shape, fine.channels);
  std::vector<int> count(y.cells(), 0);
  for (std::size_t n = 0; n < fine.cells(); ++n) {
    if (!fine.active[n]) continue;
    int c[3];
    fine.cell_coord(n, c);
    const long p = y.index(floor_half(c[0]), floor_half(c[1]), floor_half(c[2]));
    if (p < 0) fail(ErrorKind::InvalidConfig, "dense oracle parent grid too small");
    const auto pn = static_cast<std::size_t>(p);
    y.active[pn] = 1;
    ++count[pn];
    for (int ch = 0; ch < fine.channels; ++ch) y.at(pn)[ch] += fine.at(n)[ch];
  }
  for (std::size_t n = 0; n < y.cells(); ++n)
    if (count[n] > 0)
      for (int ch = 0; ch < y.channels; ++ch) y.at(n)[ch] /= count[n];
  return y;
}

// [fine | parent(coarse)] per active fine cell.
Grid concat_unpooled(const Grid& fine, const Grid& coarse) {
  Grid y = empty_like(fine, fine.channels + coarse.channels);
  y.active = fine.active;
  for (std::size_t n = 0; n < fine.cells(); ++n) {
    if (!fine.active[n]) continue;
    int c[3];
    fine.cell_coord(n, c);
    const long p = coarse.index(floor_half(c[0]), floor_half(c[1]), floor_half(c[2]));
    if (p < 0 || !coarse.active[static_cast<std::size_t>(p)])
      fail(ErrorKind::MissingParent, "dense oracle: fine cell without coarse parent");
    std::copy(fine.at(n), fine.at(n) + fine.channels, y.at(n));
    std::copy(coarse.at(static_cast<std::size_t>(p)), coarse.at(static_cast<std::size_t>(p)) + coarse.channels,
              y.at(n) + fine.channels);
  }
  return y;
}

}  // namespace

std::vector<std::vector<double>> dense_forward(const Model<double>& model, const PreparedScene& scene) {
  const ModelConfig& cfg = model.config();
  const int S = cfg.num_scales;
  const int exp_reach = cfg.decoder.reach;
  const int margin = cfg.decoder.layers * exp_reach + 2;

  // One bounding box per scale, wide enough for the decoder's dilation.
  std::vector<Grid> shapes;
  for (int s = 0; s < S; ++s) {
    const auto coords = scene.pyramid.level(s).coords();
    require(!coords.empty(), ErrorKind::EmptyInput, "dense oracle needs a non-empty scene");
    int lo[3] = {coords[0].i, coords[0].j, coords[0].k}, hi[3] = {lo[0], lo[1], lo[2]};
    for (const Coord& c : coords) {
      const int v[3] = {c.i, c.j, c.k};
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], v[a]);
        hi[a] = std::max(hi[a], v[a]);
      }
    }
    Grid g;
    for (int a = 0; a < 3; ++a) {
      g.lo[a] = lo[a] - margin;
      g.dim[a] = hi[a] - lo[a] + 1 + 2 * margin;
    }
    require(g.cells() <= kMaxDenseCells, ErrorKind::InvalidConfig,
            "scene too large for the dense oracle at scale " + std::to_string(s));
    shapes.push_back(g);
  }

  // Encoder input.
  Grid x = empty_like(shapes[0], kInputChannels);
  {
    const SparseOccupancy& vis = scene.visible;
    const auto coords = vis.coords();
    for (std::size_t n = 0; n < coords.size(); ++n) {
      const auto cell = static_cast<std::size_t>(x.index(coords[n].i, coords[n].j, coords[n].k));
      x.active[cell] = 1;
      const VoxelPayload& p = vis.payloads()[n];
      x.at(cell)[0] = std::log(1.0 + p.count);
      for (int a = 0; a < 3; ++a) x.at(cell)[1 + a] = static_cast<double>(p.offset[a]) - 0.5;
    }
  }

  std::vector<Grid> features;
  for (int s = 0; s < S; ++s) {
    if (s > 0) x = pool(x, shapes[static_cast<std::size_t>(s)]);
    for (int b = 0; b < cfg.encoder_blocks; ++b) {
      x = conv(model, "enc.s" + std::to_string(s) + ".b" + std::to_string(b), x, 1, x.active);
      activate(x, cfg.activation);
    }
    features.push_back(x);
  }

  std::vector<Grid> fused(static_cast<std::size_t>(S));
  for (int s = S - 1; s >= 0; --s) {
    const std::string up = "up.s" + std::to_string(s);
    Grid y = features[static_cast<std::size_t>(s)];
    if (s < S - 1) y = linear(model, up + ".proj", concat_unpooled(y, fused[static_cast<std::size_t>(s + 1)]));
    y = conv(model, up, y, 1, y.active);
    activate(y, cfg.activation);
    fused[static_cast<std::size_t>(s)] = std::move(y);
  }

  std::vector<std::vector<double>> logits;
  for (int s = 0; s < S; ++s) {
    const std::string dec = "dec.s" + std::to_string(s);
    Grid y = fused[static_cast<std::size_t>(s)];
    // Decoder input activity is the full visible set of this scale.
    std::fill(y.active.begin(), y.active.end(), 0);
    for (const Coord& c : scene.mask.at(s).visible) {
      const long n = y.index(c.i, c.j, c.k);
      require(n >= 0, ErrorKind::InvalidConfig, "visible voxel outside dense grid");
      y.active[static_cast<std::size_t>(n)] = 1;
    }
    for (std::size_t n = 0; n < y.cells(); ++n)
      if (!y.active[n]) std::fill(y.at(n), y.at(n) + y.channels, 0.0);
    for (int l = 0; l < cfg.decoder.layers; ++l) {
      y = conv(model, dec + ".exp" + std::to_string(l), y, exp_reach, dilated_activity(y, exp_reach));
      activate(y, cfg.activation);
    }
    for (int l = 0; l < cfg.decoder.head_depth; ++l) {
      y = conv(model, dec + ".head" + std::to_string(l), y, 1, y.active);
      activate(y, cfg.activation);
    }
    y = linear(model, dec + ".out", y);
    auto& out = logits.emplace_back();
    for (const Coord& c : scene.targets.scales[static_cast<std::size_t>(s)].coords) {
      const long n = y.index(c.i, c.j, c.k);
      if (n < 0 || !y.active[static_cast<std::size_t>(n)])
        fail(ErrorKind::CoverageError, "dense oracle: target outside decoder activity");
      out.push_back(y.at(static_cast<std::size_t>(n))[0]);
    }
  }
  return logits;
}

}  // namespace nomae::reference
