#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace nomae {

struct GradcheckOptions {
  double eps = 1e-4;         // central-difference step
  double tolerance = 1e-4;   // on the elementwise relative error
  double floor = 1e-6;       // relative error is |a-b| / max(|a|, |b|, floor)
  std::size_t model_samples = 6;  // sampled entries per model parameter tensor
  uint64_t seed = 0;
};

struct GradcheckResult {
  std::string op;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Finite-difference checks of every differentiable op and of the assembled
// model, all in 64-bit arithmetic on random instances of <= 200 active voxels.
std::vector<GradcheckResult> run_gradchecks(const GradcheckOptions& opts);

double gradcheck_rel_error(double analytic, double numeric, double floor);

void write_gradcheck_report(std::ostream& os, const std::vector<GradcheckResult>& results);

}  // namespace nomae
