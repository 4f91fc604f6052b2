#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "nomae/data.hpp"
#include "nomae/model.hpp"
#include "nomae/sparsenn/optim.hpp"

namespace nomae {

struct TrainConfig {
  int batch_size = 8;
  int epochs = 50;
  int64_t steps = 0;           // 0: epochs * ceil(scenes / batch)
  int64_t warmup_steps = -1;   // -1: 2/50 of the run (two warmup epochs out of fifty)
  double min_lr = 0.0;
  bool augment = true;
  bool resample_masks = true;  // new masks every step; false keeps one mask per scene
  uint64_t seed = 0;
  nn::AdamHyper optim;
  AugmentConfig augmentation;

  void validate() const;
  int64_t total_steps(std::size_t num_scenes) const;
  int64_t warmup(int64_t total) const;
};

struct StepResult {
  int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  std::vector<double> scale_loss;
};

// Tab-separated: step, lr, L, L(0) .. L(S-1).
void write_metrics_line(std::ostream& os, const StepResult& r);

// Deterministic sub-seed for (base, a, b).
uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b);

template <class Real>
class Trainer {
 public:
  Trainer(Model<Real>& model, PipelineConfig pipeline, TrainConfig cfg, std::vector<PointCloud> scenes);

  // One optimizer step over the next batch (scenes taken cyclically).
  StepResult step();

  // Applies the step-0 head-bias prior now instead of inside the first step(),
  // so the untrained baseline can be measured. No-op after the first call.
  void initialize();

  int64_t steps_done() const { return step_; }
  int64_t total_steps() const { return total_; }
  nn::AdamState<Real>& optimizer() { return state_; }
  const nn::AdamState<Real>& optimizer() const { return state_; }
  void set_steps_done(int64_t step) { step_ = step; }

  // Scene `index` as it enters training at `step` (augmentation + masking).
  PreparedScene prepare(std::size_t index, int64_t step) const;

 private:
  Model<Real>& model_;
  PipelineConfig pipeline_;
  TrainConfig cfg_;
  std::vector<PointCloud> scenes_;
  std::vector<std::optional<PreparedScene>> cache_;
  nn::AdamState<Real> state_;
  int64_t step_ = 0;
  int64_t total_ = 0;
  bool initialized_ = false;
};

struct SceneLoss {
  double total = 0.0;
  std::vector<double> per_scale;
};

// Pretext loss of one scene, no gradient tracking.
template <class Real>
SceneLoss scene_loss(Model<Real>& model, const PreparedScene& scene);

struct EvalReport {
  std::vector<ScaleMetrics> metrics;
  double loss = 0.0;  // mean over scenes
};

// Per-scale metrics over prepared scenes. Logits come from the model.
template <class Real>
EvalReport evaluate(Model<Real>& model, std::span<const PreparedScene> scenes);

// Same report from externally supplied logits (one vector per scale per scene).
EvalReport evaluate_logits(std::span<const PreparedScene> scenes,
                           const std::vector<std::vector<std::vector<double>>>& logits);

// Logits that reproduce the labels exactly (+20 occupied, -20 empty).
std::vector<std::vector<double>> oracle_logits(const TargetSet& targets);

// Columns: scale,targets,positives,precision,recall,iou,loss,recovered,lost
void write_eval_csv(std::ostream& os, const EvalReport& report);

}  // namespace nomae
