#include "nomae/sparsenn/optim.hpp"

#include <cmath>
#include <numbers>

#include "nomae/error.hpp"

namespace nomae::nn {

template <class Real>
void adam_step(ParamStore<Real>& params, AdamState<Real>& state, const AdamHyper& hyper, double lr) {
  auto& tensors = params.tensors();
  if (state.m.empty() && state.v.empty() && state.step == 0) {
    for (const auto& t : tensors) {
      state.m.emplace_back(t.numel(), Real(0));
      state.v.emplace_back(t.numel(), Real(0));
    }
  }
  require(state.m.size() == tensors.size() && state.v.size() == tensors.size(), ErrorKind::ShapeError,
          "optimizer state does not match parameter count");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  const Real b1 = static_cast<Real>(hyper.beta1), b2 = static_cast<Real>(hyper.beta2);
  for (std::size_t n = 0; n < tensors.size(); ++n) {
    auto& t = tensors[n];
    auto& m = state.m[n];
    auto& v = state.v[n];
    require(m.size() == t.numel() && v.size() == t.numel() && t.grad.size() == t.numel(), ErrorKind::ShapeError,
            "optimizer moments do not match parameter '" + t.name + "'");
    const Real decay = t.decay ? static_cast<Real>(1.0 - lr * hyper.weight_decay) : Real(1);
    for (std::size_t e = 0; e < t.numel(); ++e) {
      const Real g = t.grad[e];
      t.value[e] *= decay;
      m[e] = b1 * m[e] + (Real(1) - b1) * g;
      v[e] = b2 * v[e] + (Real(1) - b2) * g * g;
      const double mhat = static_cast<double>(m[e]) / bc1;
      const double vhat = static_cast<double>(v[e]) / bc2;
      t.value[e] -= static_cast<Real>(lr * mhat / (std::sqrt(vhat) + hyper.eps));
    }
  }
}

double cosine_lr(double base_lr, int64_t step, int64_t total, int64_t warmup, double min_lr) {
  if (warmup > 0 && step < warmup) return base_lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const int64_t span = std::max<int64_t>(1, total - warmup);
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(span));
  return min_lr + 0.5 * (base_lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

template void adam_step(ParamStore<float>&, AdamState<float>&, const AdamHyper&, double);
template void adam_step(ParamStore<double>&, AdamState<double>&, const AdamHyper&, double);

}  // namespace nomae::nn
