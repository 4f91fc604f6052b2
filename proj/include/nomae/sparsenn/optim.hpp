#pragma once

#include <cstdint>
#include <vector>

#include "nomae/sparsenn/tensor.hpp"

namespace nomae::nn {

struct AdamHyper {
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-2;
};

template <class Real>
struct AdamState {
  int64_t step = 0;
  std::vector<std::vector<Real>> m;  // one entry per parameter tensor, store order
  std::vector<std::vector<Real>> v;
};

// AdamW: decoupled decay p <- p (1 - lr wd) on tensors flagged for decay,
// then the bias-corrected Adam update. `lr` overrides hyper.lr (schedules).
template <class Real>
void adam_step(ParamStore<Real>& params, AdamState<Real>& state, const AdamHyper& hyper, double lr);

// Linear warmup over `warmup` steps, then cosine decay to `min_lr` at `total`.
double cosine_lr(double base_lr, int64_t step, int64_t total, int64_t warmup, double min_lr = 0.0);

}  // namespace nomae::nn
