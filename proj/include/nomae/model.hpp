#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nomae/geometry.hpp"
#include "nomae/masking.hpp"
#include "nomae/neighborhood.hpp"
#include "nomae/sparsenn/graph.hpp"

namespace nomae {

// Decoder of one scale: `layers` expansion convolutions of Chebyshev reach
// `reach` (the kernel-size alias is k = reach + 1), then `head_depth`
// submanifold layers, then a pointwise projection to one logit.
struct DecoderConfig {
  int layers = 2;
  int reach = 2;
  int head_depth = 1;

  // Side of the cube covered around every visible voxel: 2 * layers * reach + 1.
  int side() const { return 2 * layers * reach + 1; }
};

struct ModelConfig {
  int num_scales = 4;
  std::vector<int> channels{32, 64, 128, 256};  // finest -> coarsest
  int encoder_blocks = 2;
  DecoderConfig decoder;
  nn::Activation activation = nn::Activation::Gelu;
  bool prior_bias_init = true;
  uint64_t init_seed = 0;

  void validate(const NeighborhoodSpec& neighborhood) const;
};

// Geometry features fed to the encoder per visible voxel:
// log(1 + count) and the centroid offset recentred to [-0.5, 0.5).
inline constexpr int kInputChannels = 4;

struct PipelineConfig {
  double base_size = kDefaultBaseSize;
  Vec3 origin{0.0, 0.0, 0.0};
  int num_scales = 4;
  MaskingConfig masking{hmg_ratio_for_total(0.7, 4), MaskStrategy::Hmg, 0};
  NeighborhoodSpec neighborhood = NeighborhoodSpec::uniform(4, 9);

  void validate() const;
};

struct PreparedScene {
  VoxelPyramid pyramid;
  MaskAssignment mask;
  TargetSet targets;
  SparseOccupancy visible;  // finest-scale encoder input
};

// voxelize -> pyramid -> mask -> targets -> encoder input.
PreparedScene prepare_scene(const PointCloud& cloud, const PipelineConfig& cfg);

template <class Real>
nn::Matrix<Real> input_features(const SparseOccupancy& visible);

template <class Real>
struct ForwardOutput {
  std::vector<nn::SparseFeatureMap<Real>> features;  // F(s)
  std::vector<nn::SparseFeatureMap<Real>> fused;     // M_u(F)(s)
  std::vector<nn::Var> logits;                       // per scale, rows aligned with targets.scales[s].coords
};

template <class Real>
struct LossTerms {
  nn::Var total;
  std::vector<nn::Var> per_scale;
};

template <class Real>
class Model {
 public:
  Model(ModelConfig cfg, NeighborhoodSpec neighborhood);

  const ModelConfig& config() const { return cfg_; }
  const NeighborhoodSpec& neighborhood() const { return neighborhood_; }
  nn::ParamStore<Real>& params() { return params_; }
  const nn::ParamStore<Real>& params() const { return params_; }

  // Re-draws every weight uniformly in +-sqrt(6 / fan_in); biases zero.
  void initialize(uint64_t seed);

  std::vector<nn::SparseFeatureMap<Real>> encode(nn::Graph<Real>& g, const SparseOccupancy& visible);
  std::vector<nn::SparseFeatureMap<Real>> upsample_fuse(nn::Graph<Real>& g,
                                                        const std::vector<nn::SparseFeatureMap<Real>>& features);
  // Logits on exactly `targets.coords`. `visible` is the scale's visible set,
  // a superset of the fused coordinates.
  nn::Var decode_scale(nn::Graph<Real>& g, const nn::SparseFeatureMap<Real>& fused, int scale,
                       std::span<const Coord> visible, const ScaleTargets& targets);

  ForwardOutput<Real> forward(nn::Graph<Real>& g, const PreparedScene& scene);

  // Sets every decoder output bias to the logit of the occupied fraction of
  // that scale's targets across `scenes`.
  void init_head_bias_from_prior(std::span<const PreparedScene> scenes);

 private:
  ModelConfig cfg_;
  NeighborhoodSpec neighborhood_;
  nn::ParamStore<Real> params_;
};

// Mean over scales of the per-scale mean BCE.
template <class Real>
LossTerms<Real> pretext_loss(nn::Graph<Real>& g, const std::vector<nn::Var>& logits, const TargetSet& targets);

struct ScaleMetrics {
  int scale = 0;
  std::size_t targets = 0;
  std::size_t positives = 0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 1.0;
  double recall = 1.0;
  double iou = 1.0;
  double loss = 0.0;
  std::size_t recovered = 0;
  std::size_t lost = 0;
};

// Accumulates confusion counts of logits (threshold 0.5, i.e. logit > 0)
// against one scene's labels. Ratios are recomputed by finalize_metrics.
void accumulate_metrics(std::vector<ScaleMetrics>& metrics, const TargetSet& targets,
                        const std::vector<std::vector<double>>& logits);
void finalize_metrics(std::vector<ScaleMetrics>& metrics);

}  // namespace nomae
