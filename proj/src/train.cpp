#include "nomae/train.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <ostream>
#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

#include "nomae/error.hpp"

namespace nomae {

namespace {

// Late in training many gradients underflow to subnormals, which are ~100x slower
// on x86. Flush them to zero for the duration of a step.
class DenormalGuard {
 public:
#if defined(__SSE2__)
  DenormalGuard() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~DenormalGuard() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

}  // namespace

void TrainConfig::validate() const {
  require(batch_size >= 1, ErrorKind::InvalidConfig, "batch size must be >= 1");
  require(epochs >= 1 || steps > 0, ErrorKind::InvalidConfig, "need epochs >= 1 or steps > 0");
  require(steps >= 0, ErrorKind::InvalidConfig, "steps must be >= 0");
  require(optim.lr > 0.0 && optim.weight_decay >= 0.0, ErrorKind::InvalidConfig, "lr must be > 0, decay >= 0");
  require(optim.beta1 >= 0.0 && optim.beta1 < 1.0 && optim.beta2 >= 0.0 && optim.beta2 < 1.0 && optim.eps > 0.0,
          ErrorKind::InvalidConfig, "Adam betas must lie in [0, 1) and eps > 0");
  require(min_lr >= 0.0, ErrorKind::InvalidConfig, "min_lr must be >= 0");
  augmentation.validate();
}

int64_t TrainConfig::total_steps(std::size_t num_scenes) const {
  if (steps > 0) return steps;
  const auto per_epoch = static_cast<int64_t>((num_scenes + static_cast<std::size_t>(batch_size) - 1) /
                                              static_cast<std::size_t>(batch_size));
  return std::max<int64_t>(1, per_epoch) * epochs;
}

int64_t TrainConfig::warmup(int64_t total) const {
  if (warmup_steps >= 0) return std::min(warmup_steps, total);
  return total * 2 / 50;
}

void write_metrics_line(std::ostream& os, const StepResult& r) {
  os.precision(9);
  os << r.step << '\t' << r.lr << '\t' << r.loss;
  for (double l : r.scale_loss) os << '\t' << l;
  os << '\n';
}

uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b) {
  auto mix = [](uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ b);
}

template <class Real>
Trainer<Real>::Trainer(Model<Real>& model, PipelineConfig pipeline, TrainConfig cfg, std::vector<PointCloud> scenes)
    : model_(model), pipeline_(std::move(pipeline)), cfg_(std::move(cfg)), scenes_(std::move(scenes)) {
  pipeline_.validate();
  cfg_.validate();
  require(!scenes_.empty(), ErrorKind::EmptyInput, "training needs at least one scene");
  require(pipeline_.num_scales == model_.config().num_scales, ErrorKind::InvalidConfig,
          "pipeline and model disagree on the scale count");
  cache_.resize(scenes_.size());
  total_ = cfg_.total_steps(scenes_.size());
}

template <class Real>
PreparedScene Trainer<Real>::prepare(std::size_t index, int64_t step) const {
  PipelineConfig pc = pipeline_;
  pc.masking.seed = derive_seed(pipeline_.masking.seed, cfg_.resample_masks ? static_cast<uint64_t>(step) : 0, index);
  if (!cfg_.augment) return prepare_scene(scenes_.at(index), pc);
  const PointCloud cloud =
      augment(scenes_.at(index), cfg_.augmentation, derive_seed(cfg_.seed, static_cast<uint64_t>(step), index));
  return prepare_scene(cloud, pc);
}

template <class Real>
void Trainer<Real>::initialize() {
  if (initialized_) return;
  initialized_ = true;
  if (step_ != 0 || !model_.config().prior_bias_init) return;
  const std::size_t B = static_cast<std::size_t>(cfg_.batch_size);
  std::vector<PreparedScene> batch;
  for (std::size_t j = 0; j < B; ++j) batch.push_back(prepare(j % scenes_.size(), 0));
  model_.init_head_bias_from_prior(batch);
}

template <class Real>
StepResult Trainer<Real>::step() {
  const DenormalGuard guard;
  const std::size_t B = static_cast<std::size_t>(cfg_.batch_size);
  const bool cacheable = !cfg_.augment && !cfg_.resample_masks;
  std::vector<std::size_t> idx(B);
  for (std::size_t j = 0; j < B; ++j) idx[j] = (static_cast<std::size_t>(step_) * B + j) % scenes_.size();

  // Preprocessing runs concurrently; each task only reads shared state.
  std::vector<std::future<PreparedScene>> jobs;
  for (std::size_t j = 0; j < B; ++j) {
    if (cacheable && cache_[idx[j]]) continue;
    jobs.push_back(std::async(std::launch::async, [this, i = idx[j], s = step_] { return prepare(i, s); }));
  }
  std::vector<PreparedScene> batch;
  batch.reserve(B);
  std::size_t next_job = 0;
  for (std::size_t j = 0; j < B; ++j) {
    if (cacheable && cache_[idx[j]]) {
      batch.push_back(*cache_[idx[j]]);
      continue;
    }
    batch.push_back(jobs[next_job++].get());
    if (cacheable) cache_[idx[j]] = batch.back();
  }

  if (step_ == 0 && !initialized_ && model_.config().prior_bias_init) model_.init_head_bias_from_prior(batch);
  initialized_ = true;

  auto& params = model_.params();
  params.zero_grad();
  StepResult result;
  result.step = step_;
  result.scale_loss.assign(static_cast<std::size_t>(model_.config().num_scales), 0.0);
  for (const PreparedScene& scene : batch) {
    nn::Graph<Real> g(true);
    const ForwardOutput<Real> out = model_.forward(g, scene);
    const LossTerms<Real> loss = pretext_loss(g, out.logits, scene.targets);
    g.backward(loss.total);
    result.loss += static_cast<double>(g.value(loss.total).data[0]);
    for (std::size_t s = 0; s < loss.per_scale.size(); ++s)
      result.scale_loss[s] += static_cast<double>(g.value(loss.per_scale[s]).data[0]);
  }
  const double inv = 1.0 / static_cast<double>(B);
  result.loss *= inv;
  for (double& l : result.scale_loss) l *= inv;
  if (!std::isfinite(result.loss))
    fail(ErrorKind::NumericalError, "non-finite loss at step " + std::to_string(step_));
  for (auto& t : params.tensors())
    for (Real& gv : t.grad) {
      if (!std::isfinite(gv)) fail(ErrorKind::NumericalError, "non-finite gradient of " + t.name + " at step " + std::to_string(step_));
      gv = static_cast<Real>(gv * inv);
    }

  result.lr = nn::cosine_lr(cfg_.optim.lr, step_, total_, cfg_.warmup(total_), cfg_.min_lr);
  nn::adam_step(params, state_, cfg_.optim, result.lr);
  ++step_;
  return result;
}

template <class Real>
SceneLoss scene_loss(Model<Real>& model, const PreparedScene& scene) {
  nn::Graph<Real> g(false);
  const ForwardOutput<Real> out = model.forward(g, scene);
  const LossTerms<Real> loss = pretext_loss(g, out.logits, scene.targets);
  SceneLoss r;
  r.total = static_cast<double>(g.value(loss.total).data[0]);
  for (nn::Var v : loss.per_scale) r.per_scale.push_back(static_cast<double>(g.value(v).data[0]));
  return r;
}

namespace {

double bce(double z, bool y) { return std::max(z, 0.0) - (y ? z : 0.0) + std::log1p(std::exp(-std::abs(z))); }

void add_scene(EvalReport& report, const PreparedScene& scene, const std::vector<std::vector<double>>& logits) {
  accumulate_metrics(report.metrics, scene.targets, logits);
  const auto recovery = recovered_lost_accounting(scene.mask, scene.targets);
  double total = 0.0;
  for (std::size_t s = 0; s < logits.size(); ++s) {
    const auto& labels = scene.targets.scales[s].labels;
    double sum = 0.0;
    for (std::size_t n = 0; n < labels.size(); ++n) sum += bce(logits[s][n], labels[n] != 0);
    const double mean = labels.empty() ? 0.0 : sum / static_cast<double>(labels.size());
    report.metrics[s].loss += mean;
    total += mean;
    report.metrics[s].recovered += recovery[s].recovered;
    report.metrics[s].lost += recovery[s].lost;
  }
  report.loss += total / static_cast<double>(logits.size());
}

void finish(EvalReport& report, std::size_t scenes) {
  finalize_metrics(report.metrics);
  if (scenes == 0) return;
  for (ScaleMetrics& m : report.metrics) m.loss /= static_cast<double>(scenes);
  report.loss /= static_cast<double>(scenes);
}

}  // namespace

template <class Real>
EvalReport evaluate(Model<Real>& model, std::span<const PreparedScene> scenes) {
  EvalReport report;
  for (const PreparedScene& scene : scenes) {
    nn::Graph<Real> g(false);
    const ForwardOutput<Real> out = model.forward(g, scene);
    std::vector<std::vector<double>> logits;
    for (nn::Var v : out.logits) {
      const auto& m = g.value(v);
      logits.emplace_back(m.data.begin(), m.data.end());
    }
    add_scene(report, scene, logits);
  }
  finish(report, scenes.size());
  return report;
}

EvalReport evaluate_logits(std::span<const PreparedScene> scenes,
                           const std::vector<std::vector<std::vector<double>>>& logits) {
  require(logits.size() == scenes.size(), ErrorKind::AlignmentError, "one logit set per scene expected");
  EvalReport report;
  for (std::size_t n = 0; n < scenes.size(); ++n) add_scene(report, scenes[n], logits[n]);
  finish(report, scenes.size());
  return report;
}

std::vector<std::vector<double>> oracle_logits(const TargetSet& targets) {
  std::vector<std::vector<double>> out;
  for (const ScaleTargets& t : targets.scales) {
    auto& v = out.emplace_back();
    for (uint8_t l : t.labels) v.push_back(l ? 20.0 : -20.0);
  }
  return out;
}

void write_eval_csv(std::ostream& os, const EvalReport& report) {
  os << "scale,targets,positives,precision,recall,iou,loss,recovered,lost\n";
  os.precision(9);
  for (const ScaleMetrics& m : report.metrics)
    os << m.scale << ',' << m.targets << ',' << m.positives << ',' << m.precision << ',' << m.recall << ','
       << m.iou << ',' << m.loss << ',' << m.recovered << ',' << m.lost << '\n';
}

template class Trainer<float>;
template class Trainer<double>;
template SceneLoss scene_loss(Model<float>&, const PreparedScene&);
template SceneLoss scene_loss(Model<double>&, const PreparedScene&);
template EvalReport evaluate(Model<float>&, std::span<const PreparedScene>);
template EvalReport evaluate(Model<double>&, std::span<const PreparedScene>);

}  // namespace nomae
