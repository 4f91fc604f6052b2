#include "nomae/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <random>

#include "nomae/error.hpp"
#include "nomae/model.hpp"
#include "nomae/sparsenn/graph.hpp"

namespace nomae {

namespace {

using G = nn::Graph<double>;
using M = nn::Matrix<double>;
using P = nn::ParamTensor<double>;

class Rand {
 public:
  explicit Rand(uint64_t seed) : gen_(seed) {}
  double uniform(double lo, double hi) { return lo + (hi - lo) * static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }
  M matrix(std::size_t r, std::size_t c, double away_from_zero = 0.0) {
    M m(r, c);
    for (double& v : m.data) {
      do v = uniform(-1.0, 1.0);
      while (std::abs(v) < away_from_zero);
    }
    return m;
  }
  P param(const std::string& name, std::vector<std::size_t> shape) {
    P p;
    p.name = name;
    p.shape = std::move(shape);
    std::size_t n = 1;
    for (std::size_t d : p.shape) n *= d;
    p.value.resize(n);
    for (double& v : p.value) v = uniform(-0.5, 0.5);
    p.grad.assign(n, 0.0);
    return p;
  }
  std::vector<Coord> coords(std::size_t n, int extent) {
    std::vector<Coord> out;
    for (std::size_t k = 0; k < n; ++k)
      out.push_back({static_cast<int32_t>(index(static_cast<std::size_t>(extent))),
                     static_cast<int32_t>(index(static_cast<std::size_t>(extent))),
                     static_cast<int32_t>(index(static_cast<std::size_t>(extent)))});
    return out;
  }

 private:
  std::mt19937_64 gen_;
};

// loss = sum(out * R) with R fixed for the whole check.
nn::Var probe(G& g, nn::Var out, std::shared_ptr<M>& weights, Rand& rng) {
  const M& v = g.value(out);
  if (!weights) weights = std::make_shared<M>(rng.matrix(v.rows, v.cols));
  double total = 0.0;
  for (std::size_t n = 0; n < v.data.size(); ++n) total += v.data[n] * weights->data[n];
  auto w = weights;
  return g.record("probe", M(1, 1, total), g.requires_grad(out), [out, w](G& gr, const M& dy) {
    M& dx = gr.grad(out);
    for (std::size_t n = 0; n < dx.data.size(); ++n) dx.data[n] += w->data[n] * dy.data[0];
  });
}

using Build = std::function<nn::Var(G&, const std::vector<nn::Var>&)>;

struct Checker {
  const GradcheckOptions& opts;
  Rand& rng;

  GradcheckResult run(const std::string& op, std::vector<M> inputs, std::vector<P*> params, const Build& build) {
    std::shared_ptr<M> weights;
    auto evaluate = [&](bool with_grad, std::vector<M>* input_grads) {
      G g(with_grad);
      std::vector<nn::Var> vars;
      for (const M& m : inputs) vars.push_back(g.input(m, true));
      const nn::Var loss = probe(g, build(g, vars), weights, rng);
      const double value = g.value(loss).data[0];
      if (with_grad) {
        g.backward(loss);
        for (nn::Var v : vars) input_grads->push_back(g.has_grad(v) ? g.grad(v) : M(g.value(v).rows, g.value(v).cols));
      }
      return value;
    };
    for (P* p : params) std::fill(p->grad.begin(), p->grad.end(), 0.0);
    std::vector<M> analytic;
    evaluate(true, &analytic);

    GradcheckResult res;
    res.op = op;
    auto compare = [&](double& slot, double a) {
      const double keep = slot;
      slot = keep + opts.eps;
      const double up = evaluate(false, nullptr);
      slot = keep - opts.eps;
      const double down = evaluate(false, nullptr);
      slot = keep;
      const double numeric = (up - down) / (2.0 * opts.eps);
      res.max_rel_error = std::max(res.max_rel_error, gradcheck_rel_error(a, numeric, opts.floor));
      ++res.checked;
    };
    for (std::size_t k = 0; k < inputs.size(); ++k)
      for (std::size_t n = 0; n < inputs[k].data.size(); ++n) compare(inputs[k].data[n], analytic[k].data[n]);
    for (P* p : params) {
      const std::vector<double> grad = p->grad;
      for (std::size_t n = 0; n < p->value.size(); ++n) compare(p->value[n], grad[n]);
    }
    res.passed = res.max_rel_error < opts.tolerance;
    return res;
  }
};

nn::CoordTablePtr table(std::vector<Coord> coords) { return std::make_shared<const CoordTable>(std::move(coords)); }

GradcheckResult check_model(const GradcheckOptions& opts, Rand& rng) {
  // Three clustered blobs, at most 200 voxels in total, at unit voxel size.
  PointCloud cloud;
  for (int blob = 0; blob < 3; ++blob)
    for (const Coord& c : rng.coords(55, 5))
      for (int rep = 0; rep < 2; ++rep)
        cloud.points.push_back({static_cast<float>(16 * blob + c.i + rng.uniform(0.05, 0.95)),
                                static_cast<float>(c.j + rng.uniform(0.05, 0.95)),
                                static_cast<float>(c.k + rng.uniform(0.05, 0.95)), 0.f});
  PipelineConfig pc;
  pc.base_size = 1.0;
  // Re-draw until every scale keeps a visible voxel.
  std::optional<PreparedScene> prepared;
  for (uint64_t attempt = 0; !prepared; ++attempt) {
    pc.masking = masking_for_total(MaskStrategy::Hmg, 0.5, 4, opts.seed + attempt);
    try {
      prepared = prepare_scene(cloud, pc);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::EmptyInput || attempt > 64) throw;
    }
  }
  const PreparedScene& scene = *prepared;

  ModelConfig mc;
  mc.channels = {3, 3, 4, 4};
  mc.init_seed = opts.seed + 1;
  Model<double> model(mc, pc.neighborhood);
  model.init_head_bias_from_prior(std::span<const PreparedScene>(&scene, 1));

  auto loss_of = [&](bool with_grad) {
    G g(with_grad);
    const auto out = model.forward(g, scene);
    const auto loss = pretext_loss(g, out.logits, scene.targets);
    if (with_grad) g.backward(loss.total);
    return g.value(loss.total).data[0];
  };
  model.params().zero_grad();
  loss_of(true);

  GradcheckResult res;
  res.op = "model";
  for (auto& t : model.params().tensors()) {
    const std::vector<double> grad = t.grad;
    const std::size_t samples = std::min(opts.model_samples, t.numel());
    for (std::size_t k = 0; k < samples; ++k) {
      const std::size_t n = samples == t.numel() ? k : rng.index(t.numel());
      const double keep = t.value[n];
      t.value[n] = keep + opts.eps;
      const double up = loss_of(false);
      t.value[n] = keep - opts.eps;
      const double down = loss_of(false);
      t.value[n] = keep;
      res.max_rel_error =
          std::max(res.max_rel_error, gradcheck_rel_error(grad[n], (up - down) / (2.0 * opts.eps), opts.floor));
      ++res.checked;
    }
  }
  res.passed = res.max_rel_error < opts.tolerance;
  return res;
}

}  // namespace

double gradcheck_rel_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

std::vector<GradcheckResult> run_gradchecks(const GradcheckOptions& opts) {
  Rand rng(opts.seed);
  Checker check{opts, rng};
  std::vector<GradcheckResult> out;

  {
    P w = rng.param("w", {3, 4}), b = rng.param("b", {4});
    out.push_back(check.run("linear", {rng.matrix(20, 3)}, {&w, &b},
                            [&](G& g, const auto& v) { return nn::linear(g, v[0], w, &b); }));
  }
  {
    const auto coords = table(rng.coords(60, 6));
    const auto rb = nn::submanifold_rulebook(coords, 1);
    P w = rng.param("w", {27, 3, 2}), b = rng.param("b", {2});
    out.push_back(check.run("submanifold_conv", {rng.matrix(coords->size(), 3)}, {&w, &b}, [&](G& g, const auto& v) {
      return nn::submanifold_conv(g, nn::SparseFeatureMap<double>{coords, 0, v[0]}, rb, w, &b).features;
    }));
  }
  for (int reach : {1, 2}) {
    const auto coords = table(rng.coords(25, 6));
    const auto rb = nn::expansion_rulebook(coords, reach);
    const std::size_t taps = rb->taps();
    P w = rng.param("w", {taps, 2, 2}), b = rng.param("b", {2});
    out.push_back(check.run("expansion_conv_r" + std::to_string(reach), {rng.matrix(coords->size(), 2)}, {&w, &b},
                            [&](G& g, const auto& v) {
                              return nn::expansion_conv(g, nn::SparseFeatureMap<double>{coords, 0, v[0]}, rb, w, &b)
                                  .features;
                            }));
  }
  out.push_back(check.run("relu", {rng.matrix(30, 3, 0.05)}, {},
                          [](G& g, const auto& v) { return nn::activate(g, v[0], nn::Activation::Relu); }));
  out.push_back(check.run("gelu", {rng.matrix(30, 3)}, {},
                          [](G& g, const auto& v) { return nn::activate(g, v[0], nn::Activation::Gelu); }));
  out.push_back(check.run("add", {rng.matrix(12, 3), rng.matrix(12, 3)}, {},
                          [](G& g, const auto& v) { return nn::add(g, v[0], v[1]); }));
  out.push_back(check.run("concat", {rng.matrix(12, 3), rng.matrix(12, 2)}, {},
                          [](G& g, const auto& v) { return nn::concat(g, v[0], v[1]); }));
  {
    const auto coords = table(rng.coords(80, 8));
    out.push_back(check.run("pool_down", {rng.matrix(coords->size(), 3)}, {}, [&](G& g, const auto& v) {
      return nn::pool_down(g, nn::SparseFeatureMap<double>{coords, 0, v[0]}).features;
    }));
    const auto coarse = nn::pooled_coords(*coords);
    out.push_back(check.run("unpool_up", {rng.matrix(coarse->size(), 3)}, {}, [&](G& g, const auto& v) {
      return nn::unpool_up(g, nn::SparseFeatureMap<double>{coarse, 1, v[0]}, coords).features;
    }));
  }
  {
    auto dest = std::make_shared<const std::vector<uint32_t>>(std::vector<uint32_t>{4, 0, 7, 2, 9});
    out.push_back(check.run("scatter_rows", {rng.matrix(5, 3)}, {},
                            [&](G& g, const auto& v) { return nn::scatter_rows(g, v[0], dest, 11); }));
    auto src = std::make_shared<const std::vector<uint32_t>>(std::vector<uint32_t>{1, 1, 3, 0, 2, 3});
    out.push_back(check.run("gather_rows", {rng.matrix(4, 3)}, {},
                            [&](G& g, const auto& v) { return nn::gather_rows(g, v[0], src); }));
  }
  {
    std::vector<uint8_t> labels(40);
    for (auto& l : labels) l = static_cast<uint8_t>(rng.index(2));
    M z = rng.matrix(40, 1);
    for (double& v : z.data) v *= 6.0;
    out.push_back(check.run("bce_with_logits", {z}, {},
                            [&](G& g, const auto& v) { return nn::bce_with_logits(g, v[0], labels); }));
  }
  {
    const std::vector<double> w{0.25, 0.5, 0.25};
    out.push_back(check.run("weighted_sum", {rng.matrix(1, 1), rng.matrix(1, 1), rng.matrix(1, 1)}, {},
                            [&](G& g, const auto& v) { return nn::weighted_sum(g, std::span<const nn::Var>(v), w); }));
  }
  out.push_back(check_model(opts, rng));
  return out;
}

void write_gradcheck_report(std::ostream& os, const std::vector<GradcheckResult>& results) {
  os << "op,checked,max_rel_error,passed\n";
  os.precision(6);
  for (const auto& r : results)
    os << r.op << ',' << r.checked << ',' << r.max_rel_error << ',' << (r.passed ? "yes" : "no") << '\n';
}

}  // namespace nomae
