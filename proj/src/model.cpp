#include "nomae/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "nomae/error.hpp"

namespace nomae {

namespace {

std::string enc_name(int s, int b) { return "enc.s" + std::to_string(s) + ".b" + std::to_string(b); }
std::string up_name(int s) { return "up.s" + std::to_string(s); }
std::string dec_name(int s) { return "dec.s" + std::to_string(s); }

constexpr int kBlockReach = 1;
constexpr std::size_t kBlockTaps = 27;

std::size_t taps_for(int reach) {
  const std::size_t side = static_cast<std::size_t>(2 * reach + 1);
  return side * side * side;
}

}  // namespace

void ModelConfig::validate(const NeighborhoodSpec& neighborhood) const {
  require(num_scales >= 2, ErrorKind::InvalidConfig, "model needs at least two scales");
  require(static_cast<int>(channels.size()) == num_scales, ErrorKind::InvalidConfig,
          "model.channels needs one width per scale");
  for (int c : channels) require(c >= 1, ErrorKind::InvalidConfig, "channel widths must be positive");
  require(encoder_blocks >= 1, ErrorKind::InvalidConfig, "encoder needs at least one block per scale");
  require(decoder.layers >= 1 && decoder.reach >= 1, ErrorKind::InvalidConfig,
          "decoder needs at least one expansion layer of reach >= 1");
  require(decoder.head_depth >= 0, ErrorKind::InvalidConfig, "decoder head depth must be >= 0");
  neighborhood.validate();
  require(neighborhood.num_scales() == num_scales, ErrorKind::InvalidConfig,
          "neighborhood sizes must be given for every scale");
  for (int s = 0; s < num_scales; ++s)
    require(neighborhood.side[static_cast<std::size_t>(s)] == decoder.side(), ErrorKind::InvalidConfig,
            "decoder covers side 2*m*e+1 = " + std::to_string(decoder.side()) + " but neighborhood at scale " +
                std::to_string(s) + " is " + std::to_string(neighborhood.side[static_cast<std::size_t>(s)]));
}

void PipelineConfig::validate() const {
  require(base_size > 0.0, ErrorKind::InvalidConfig, "base voxel size must be positive");
  require(num_scales >= 1, ErrorKind::InvalidConfig, "need at least one scale");
  masking.validate();
  neighborhood.validate();
  require(neighborhood.num_scales() == num_scales, ErrorKind::InvalidConfig,
          "neighborhood sizes must be given for every scale");
}

PreparedScene prepare_scene(const PointCloud& cloud, const PipelineConfig& cfg) {
  cfg.validate();
  PreparedScene scene;
  scene.pyramid = build_pyramid(voxelize(cloud, cfg.base_size, cfg.origin).occupancy, cfg.num_scales);
  scene.mask = generate_mask(scene.pyramid, cfg.masking);
  scene.targets = build_targets(scene.mask, scene.pyramid, cfg.neighborhood);
  scene.visible = encoder_input(scene.mask, scene.pyramid);
  return scene;
}

template <class Real>
nn::Matrix<Real> input_features(const SparseOccupancy& visible) {
  nn::Matrix<Real> x(visible.size(), kInputChannels);
  for (std::size_t r = 0; r < visible.size(); ++r) {
    const VoxelPayload& p = visible.payloads()[r];
    x(r, 0) = static_cast<Real>(std::log1p(static_cast<double>(p.count)));
    for (int a = 0; a < 3; ++a) x(r, 1 + a) = static_cast<Real>(static_cast<double>(p.offset[a]) - 0.5);
  }
  return x;
}

template <class Real>
Model<Real>::Model(ModelConfig cfg, NeighborhoodSpec neighborhood)
    : cfg_(std::move(cfg)), neighborhood_(std::move(neighborhood)) {
  cfg_.validate(neighborhood_);
  const int S = cfg_.num_scales;
  auto C = [&](int s) { return static_cast<std::size_t>(cfg_.channels[static_cast<std::size_t>(s)]); };
  for (int s = 0; s < S; ++s) {
    for (int b = 0; b < cfg_.encoder_blocks; ++b) {
      const std::size_t cin = b > 0 ? C(s) : (s == 0 ? kInputChannels : C(s - 1));
      params_.add(enc_name(s, b) + ".w", {kBlockTaps, cin, C(s)}, true);
      params_.add(enc_name(s, b) + ".b", {C(s)}, false);
    }
  }
  for (int s = S - 1; s >= 0; --s) {
    if (s < S - 1) {
      params_.add(up_name(s) + ".proj.w", {C(s) + C(s + 1), C(s)}, true);
      params_.add(up_name(s) + ".proj.b", {C(s)}, false);
    }
    params_.add(up_name(s) + ".w", {kBlockTaps, C(s), C(s)}, true);
    params_.add(up_name(s) + ".b", {C(s)}, false);
  }
  const std::size_t exp_taps = taps_for(cfg_.decoder.reach);
  for (int s = 0; s < S; ++s) {
    for (int l = 0; l < cfg_.decoder.layers; ++l) {
      params_.add(dec_name(s) + ".exp" + std::to_string(l) + ".w", {exp_taps, C(s), C(s)}, true);
      params_.add(dec_name(s) + ".exp" + std::to_string(l) + ".b", {C(s)}, false);
    }
    for (int l = 0; l < cfg_.decoder.head_depth; ++l) {
      params_.add(dec_name(s) + ".head" + std::to_string(l) + ".w", {kBlockTaps, C(s), C(s)}, true);
      params_.add(dec_name(s) + ".head" + std::to_string(l) + ".b", {C(s)}, false);
    }
    params_.add(dec_name(s) + ".out.w", {C(s), 1}, true);
    params_.add(dec_name(s) + ".out.b", {1}, false);
  }
  initialize(cfg_.init_seed);
}

template <class Real>
void Model<Real>::initialize(uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& t : params_.tensors()) {
    if (t.shape.size() == 1) {
      std::fill(t.value.begin(), t.value.end(), Real(0));
      continue;
    }
    std::size_t fan_in = 1;
    for (std::size_t d = 0; d + 1 < t.shape.size(); ++d) fan_in *= t.shape[d];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (Real& v : t.value) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      v = static_cast<Real>(bound * (2.0 * u - 1.0));
    }
  }
}

template <class Real>
std::vector<nn::SparseFeatureMap<Real>> Model<Real>::encode(nn::Graph<Real>& g, const SparseOccupancy& visible) {
  require(!visible.empty(), ErrorKind::EmptyInput, "encoder input is empty");
  const int S = cfg_.num_scales;
  std::vector<nn::SparseFeatureMap<Real>> F;
  nn::SparseFeatureMap<Real> x{std::make_shared<const CoordTable>(visible.table()), 0,
                               g.input(input_features<Real>(visible))};
  for (int s = 0; s < S; ++s) {
    if (s > 0) x = nn::pool_down(g, x);
    const nn::RulebookPtr rb = nn::submanifold_rulebook(x.coords, kBlockReach);
    for (int b = 0; b < cfg_.encoder_blocks; ++b) {
      x = nn::submanifold_conv(g, x, rb, params_.get(enc_name(s, b) + ".w"), &params_.get(enc_name(s, b) + ".b"));
      x = nn::activation(g, x, cfg_.activation);
    }
    F.push_back(x);
  }
  return F;
}

template <class Real>
std::vector<nn::SparseFeatureMap<Real>> Model<Real>::upsample_fuse(
    nn::Graph<Real>& g, const std::vector<nn::SparseFeatureMap<Real>>& features) {
  const int S = cfg_.num_scales;
  require(static_cast<int>(features.size()) == S, ErrorKind::ShapeError, "expected one feature map per scale");
  std::vector<nn::SparseFeatureMap<Real>> fused(static_cast<std::size_t>(S));
  for (int s = S - 1; s >= 0; --s) {
    nn::SparseFeatureMap<Real> x = features[static_cast<std::size_t>(s)];
    if (s < S - 1) {
      const auto up = nn::unpool_up(g, fused[static_cast<std::size_t>(s + 1)], x.coords);
      x = nn::pointwise_linear(g, nn::concat(g, x, up), params_.get(up_name(s) + ".proj.w"),
                               &params_.get(up_name(s) + ".proj.b"));
    }
    const nn::RulebookPtr rb = nn::submanifold_rulebook(x.coords, kBlockReach);
    x = nn::submanifold_conv(g, x, rb, params_.get(up_name(s) + ".w"), &params_.get(up_name(s) + ".b"));
    fused[static_cast<std::size_t>(s)] = nn::activation(g, x, cfg_.activation);
  }
  return fused;
}

template <class Real>
nn::Var Model<Real>::decode_scale(nn::Graph<Real>& g, const nn::SparseFeatureMap<Real>& fused, int scale,
                                  std::span<const Coord> visible, const ScaleTargets& targets) {
  require(scale >= 0 && scale < cfg_.num_scales, ErrorKind::InvalidScale, "decoder scale out of range");
  const std::string name = dec_name(scale);

  // Visible voxels of this scale without encoder tokens enter with zero features.
  auto vis = std::make_shared<const CoordTable>(std::vector<Coord>(visible.begin(), visible.end()));
  auto dest = std::make_shared<std::vector<uint32_t>>(fused.size());
  for (std::size_t r = 0; r < fused.size(); ++r) {
    (*dest)[r] = vis->find((*fused.coords)[r]);
    if ((*dest)[r] == CoordIndex::kNotFound)
      fail(ErrorKind::CoverageError, "encoder token at scale " + std::to_string(scale) + " is not a visible voxel");
  }
  nn::SparseFeatureMap<Real> x{vis, scale, nn::scatter_rows(g, fused.features, dest, vis->size())};

  for (int l = 0; l < cfg_.decoder.layers; ++l) {
    const std::string p = name + ".exp" + std::to_string(l);
    x = nn::expansion_conv(g, x, nn::expansion_rulebook(x.coords, cfg_.decoder.reach), params_.get(p + ".w"),
                           &params_.get(p + ".b"));
    x = nn::activation(g, x, cfg_.activation);
  }
  if (cfg_.decoder.head_depth > 0) {
    const nn::RulebookPtr rb = nn::submanifold_rulebook(x.coords, kBlockReach);
    for (int l = 0; l < cfg_.decoder.head_depth; ++l) {
      const std::string p = name + ".head" + std::to_string(l);
      x = nn::activation(g, nn::submanifold_conv(g, x, rb, params_.get(p + ".w"), &params_.get(p + ".b")),
                         cfg_.activation);
    }
  }
  x = nn::pointwise_linear(g, x, params_.get(name + ".out.w"), &params_.get(name + ".out.b"));

  auto rows = std::make_shared<std::vector<uint32_t>>(targets.coords.size());
  for (std::size_t n = 0; n < targets.coords.size(); ++n) {
    (*rows)[n] = x.coords->find(targets.coords[n]);
    if ((*rows)[n] == CoordIndex::kNotFound)
      fail(ErrorKind::CoverageError,
           "target outside the decoder's active set at scale " + std::to_string(scale) + " (2*m*e+1 < n?)");
  }
  return nn::gather_rows(g, x.features, std::shared_ptr<const std::vector<uint32_t>>(rows));
}

template <class Real>
ForwardOutput<Real> Model<Real>::forward(nn::Graph<Real>& g, const PreparedScene& scene) {
  const int S = cfg_.num_scales;
  require(scene.targets.num_scales() == S && scene.mask.num_scales() == S, ErrorKind::InvalidConfig,
          "scene scale count does not match the model");
  ForwardOutput<Real> out;
  out.features = encode(g, scene.visible);
  out.fused = upsample_fuse(g, out.features);
  for (int s = 0; s < S; ++s)
    out.logits.push_back(decode_scale(g, out.fused[static_cast<std::size_t>(s)], s, scene.mask.at(s).visible,
                                      scene.targets.scales[static_cast<std::size_t>(s)]));
  return out;
}

template <class Real>
void Model<Real>::init_head_bias_from_prior(std::span<const PreparedScene> scenes) {
  for (int s = 0; s < cfg_.num_scales; ++s) {
    std::size_t pos = 0, total = 0;
    for (const PreparedScene& sc : scenes) {
      const auto& labels = sc.targets.scales.at(static_cast<std::size_t>(s)).labels;
      total += labels.size();
      pos += static_cast<std::size_t>(std::count(labels.begin(), labels.end(), uint8_t{1}));
    }
    if (total == 0) continue;
    const double p = std::clamp(static_cast<double>(pos) / static_cast<double>(total), 1e-4, 1.0 - 1e-4);
    params_.get(dec_name(s) + ".out.b").value[0] = static_cast<Real>(std::log(p / (1.0 - p)));
  }
}

template <class Real>
LossTerms<Real> pretext_loss(nn::Graph<Real>& g, const std::vector<nn::Var>& logits, const TargetSet& targets) {
  require(logits.size() == targets.scales.size(), ErrorKind::AlignmentError, "one logit set per scale expected");
  LossTerms<Real> out;
  for (std::size_t s = 0; s < logits.size(); ++s) {
    const auto& labels = targets.scales[s].labels;
    if (labels.empty()) fail(ErrorKind::EmptyScale, "scale " + std::to_string(s) + " has no targets");
    out.per_scale.push_back(nn::bce_with_logits(g, logits[s], std::span<const uint8_t>(labels)));
  }
  const std::vector<double> w(out.per_scale.size(), 1.0 / static_cast<double>(out.per_scale.size()));
  out.total = nn::weighted_sum(g, std::span<const nn::Var>(out.per_scale), std::span<const double>(w));
  return out;
}

void accumulate_metrics(std::vector<ScaleMetrics>& metrics, const TargetSet& targets,
                        const std::vector<std::vector<double>>& logits) {
  require(logits.size() == targets.scales.size(), ErrorKind::AlignmentError, "one logit set per scale expected");
  if (metrics.empty()) {
    metrics.resize(targets.scales.size());
    for (std::size_t s = 0; s < metrics.size(); ++s) metrics[s].scale = static_cast<int>(s);
  }
  require(metrics.size() == targets.scales.size(), ErrorKind::AlignmentError, "metric scale count differs");
  for (std::size_t s = 0; s < logits.size(); ++s) {
    const auto& labels = targets.scales[s].labels;
    require(logits[s].size() == labels.size(), ErrorKind::AlignmentError, "logit and label counts differ");
    ScaleMetrics& m = metrics[s];
    for (std::size_t n = 0; n < labels.size(); ++n) {
      const bool pred = logits[s][n] > 0.0;
      const bool truth = labels[n] != 0;
      m.tp += pred && truth;
      m.fp += pred && !truth;
      m.fn += !pred && truth;
      m.tn += !pred && !truth;
      m.positives += truth;
    }
    m.targets += labels.size();
  }
}

void finalize_metrics(std::vector<ScaleMetrics>& metrics) {
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  for (ScaleMetrics& m : metrics) {
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.recall = ratio(m.tp, m.tp + m.fn);
    m.iou = ratio(m.tp, m.tp + m.fp + m.fn);
  }
}

template nn::Matrix<float> input_features(const SparseOccupancy&);
template nn::Matrix<double> input_features(const SparseOccupancy&);
template class Model<float>;
template class Model<double>;
template LossTerms<float> pretext_loss(nn::Graph<float>&, const std::vector<nn::Var>&, const TargetSet&);
template LossTerms<double> pretext_loss(nn::Graph<double>&, const std::vector<nn::Var>&, const TargetSet&);

}  // namespace nomae
