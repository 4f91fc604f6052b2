#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include "nomae/error.hpp"
#include "nomae/gradcheck.hpp"
#include "nomae/sparsenn/checkpoint.hpp"
#include "nomae/sparsenn/graph.hpp"
#include "nomae/sparsenn/optim.hpp"
#include "support.hpp"

namespace nomae::nn {
namespace {

using M = Matrix<double>;

M random_matrix(std::size_t r, std::size_t c, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  M m(r, c);
  for (double& v : m.data) v = u(rng);
  return m;
}

void fill_random(ParamTensor<double>& t, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : t.value) v = u(rng);
}

CoordTablePtr table(std::vector<Coord> c) { return std::make_shared<const CoordTable>(std::move(c)); }

// Direct evaluation of y(o) = b + sum_d W(d)^T x(o + d) for every output coord o.
M conv_oracle(const CoordTable& in, const M& x, const CoordTable& out, int reach, const ParamTensor<double>& w,
              const ParamTensor<double>* b) {
  const std::size_t cin = w.shape[1], cout = w.shape[2];
  M y(out.size(), cout);
  for (std::size_t o = 0; o < out.size(); ++o) {
    for (std::size_t co = 0; co < cout; ++co) y(o, co) = b ? b->value[co] : 0.0;
    std::size_t t = 0;
    for (int di = -reach; di <= reach; ++di)
      for (int dj = -reach; dj <= reach; ++dj)
        for (int dk = -reach; dk <= reach; ++dk, ++t) {
          const uint32_t i = in.find(out[o] + Coord{di, dj, dk});
          if (i == CoordIndex::kNotFound) continue;
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t co = 0; co < cout; ++co) y(o, co) += w.value[(t * cin + ci) * cout + co] * x(i, ci);
        }
  }
  return y;
}

void expect_near(const M& a, const M& b, double tol) {
  ASSERT_EQ(a.rows, b.rows);
  ASSERT_EQ(a.cols, b.cols);
  for (std::size_t n = 0; n < a.data.size(); ++n) EXPECT_NEAR(a.data[n], b.data[n], tol) << "entry " << n;
}

TEST(SubmanifoldConv, IdentityKernelCopiesInput) {
  auto coords = table(testing::random_coords(40, 5, 1));
  ParamStore<double> ps;
  auto& w = ps.add("w", {27, 3, 3}, true);
  for (std::size_t c = 0; c < 3; ++c) w.value[(13 * 3 + c) * 3 + c] = 1.0;
  Graph<double> g(false);
  const M x = random_matrix(coords->size(), 3, 2);
  SparseFeatureMap<double> in{coords, 0, g.input(x)};
  const auto out = submanifold_conv(g, in, submanifold_rulebook(coords, 1), w);
  EXPECT_EQ(out.coords, coords);
  expect_near(g.value(out.features), x, 0.0);
}

TEST(SubmanifoldConv, SingleVoxelUsesOnlyCentreTap) {
  auto coords = table({{4, 4, 4}});
  ParamStore<double> ps;
  auto& w = ps.add("w", {27, 2, 2}, true);
  fill_random(w, 3);
  Graph<double> g(false);
  const M x = random_matrix(1, 2, 4);
  const auto y = g.value(submanifold_conv(g, {coords, 0, g.input(x)}, submanifold_rulebook(coords, 1), w).features);
  for (std::size_t co = 0; co < 2; ++co)
    EXPECT_NEAR(y(0, co), w.value[(13 * 2 + 0) * 2 + co] * x(0, 0) + w.value[(13 * 2 + 1) * 2 + co] * x(0, 1), 1e-15);
}

TEST(SubmanifoldConv, LineMatchesDirectEvaluation) {
  std::vector<Coord> line;
  for (int n = 0; n < 10; ++n) line.push_back({n, 2, -1});
  auto coords = table(line);
  ParamStore<double> ps;
  auto& w = ps.add("w", {27, 3, 2}, true);
  auto& b = ps.add("b", {2}, false);
  fill_random(w, 5);
  fill_random(b, 6);
  Graph<double> g(false);
  const M x = random_matrix(10, 3, 7);
  const auto y = submanifold_conv(g, {coords, 0, g.input(x)}, submanifold_rulebook(coords, 1), w, &b);
  expect_near(g.value(y.features), conv_oracle(*coords, x, *coords, 1, w, &b), 1e-12);
}

TEST(ExpansionConv, OneVoxelReachOneGives27Outputs) {
  auto coords = table({{0, 0, 0}});
  ParamStore<double> ps;
  auto& w = ps.add("w", {27, 2, 3}, true);
  fill_random(w, 8);
  Graph<double> g(false);
  const M x = random_matrix(1, 2, 9);
  const auto y = expansion_conv(g, {coords, 0, g.input(x)}, expansion_rulebook(coords, 1), w);
  ASSERT_EQ(y.size(), 27u);
  expect_near(g.value(y.features), conv_oracle(*coords, x, *y.coords, 1, w, nullptr), 1e-12);
}

TEST(ExpansionConv, RandomSetMatchesDirectEvaluation) {
  auto coords = table(testing::random_coords(30, 6, 10));
  ParamStore<double> ps;
  auto& w = ps.add("w", {125, 2, 2}, true);
  auto& b = ps.add("b", {2}, false);
  fill_random(w, 11);
  fill_random(b, 12);
  Graph<double> g(false);
  const M x = random_matrix(coords->size(), 2, 13);
  const auto y = expansion_conv(g, {coords, 0, g.input(x)}, expansion_rulebook(coords, 2), w, &b);
  expect_near(g.value(y.features), conv_oracle(*coords, x, *y.coords, 2, w, &b), 1e-12);
}

TEST(ExpansionConv, ActiveSideIsTwoMEPlusOne) {
  struct Case {
    int m, e, n;
  };
  for (const Case c : {Case{1, 1, 3}, Case{2, 1, 5}, Case{2, 2, 9}}) {
    CoordTablePtr coords = table({{0, 0, 0}});
    for (int l = 0; l < c.m; ++l) coords = expansion_rulebook(coords, c.e)->out;
    EXPECT_EQ(coords->size(), static_cast<std::size_t>(c.n * c.n * c.n));
    int extent = 0;
    for (const Coord& q : *coords) extent = std::max(extent, chebyshev_distance(q, {0, 0, 0}));
    EXPECT_EQ(2 * extent + 1, c.n);
  }
}

TEST(PoolDown, UniformFeaturesUnchanged) {
  auto coords = table(testing::random_coords(80, 6, 14));
  Graph<double> g(false);
  M x(coords->size(), 2, 0.75);
  const auto y = pool_down(g, SparseFeatureMap<double>{coords, 0, g.input(x)});
  for (double v : g.value(y.features).data) EXPECT_DOUBLE_EQ(v, 0.75);
  EXPECT_EQ(y.scale, 1);
}

TEST(PoolDown, OneChildPerParentCopies) {
  auto coords = table({{0, 0, 0}, {4, 0, 0}, {0, 6, 2}});
  Graph<double> g(false);
  const M x = random_matrix(3, 2, 15);
  const auto y = pool_down(g, SparseFeatureMap<double>{coords, 0, g.input(x)});
  for (std::size_t r = 0; r < 3; ++r) {
    const uint32_t p = y.coords->find(parent_of((*coords)[r]));
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(g.value(y.features)(p, c), x(r, c));
  }
}

TEST(PoolDown, MatchesGroupByParentMean) {
  auto coords = table(testing::random_coords(200, 6, 16));
  Graph<double> g(false);
  const M x = random_matrix(coords->size(), 3, 17);
  const auto y = pool_down(g, SparseFeatureMap<double>{coords, 0, g.input(x)});
  std::map<Coord, std::pair<std::vector<double>, int>> acc;
  for (std::size_t r = 0; r < coords->size(); ++r) {
    auto& [sum, n] = acc[parent_of((*coords)[r])];
    sum.resize(3, 0.0);
    for (std::size_t c = 0; c < 3; ++c) sum[c] += x(r, c);
    ++n;
  }
  ASSERT_EQ(y.size(), acc.size());
  for (const auto& [c, e] : acc) {
    const uint32_t p = y.coords->find(c);
    ASSERT_NE(p, CoordIndex::kNotFound);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(g.value(y.features)(p, k), e.first[k] / e.second, 1e-14);
  }
}

TEST(UnpoolUp, EightChildrenGetIdenticalRows) {
  auto coarse = table({{0, 0, 0}});
  std::vector<Coord> kids;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c) kids.push_back({a, b, c});
  auto fine = table(kids);
  Graph<double> g(false);
  const M x = random_matrix(1, 4, 18);
  const auto y = unpool_up(g, SparseFeatureMap<double>{coarse, 1, g.input(x)}, fine);
  ASSERT_EQ(y.size(), 8u);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(g.value(y.features)(r, c), x(0, c));
}

TEST(UnpoolUp, ThenPoolReproducesCoarse) {
  auto fine = table(testing::random_coords(150, 6, 19));
  auto coarse = pooled_coords(*fine);
  Graph<double> g(false);
  const M x = random_matrix(coarse->size(), 2, 20);
  const auto up = unpool_up(g, SparseFeatureMap<double>{coarse, 1, g.input(x)}, fine);
  const auto back = pool_down(g, up);
  expect_near(g.value(back.features), x, 1e-15);
}

TEST(UnpoolUp, MatchesParentLookup) {
  auto fine = table(testing::random_coords(150, 6, 21));
  auto coarse = pooled_coords(*fine);
  Graph<double> g(false);
  const M x = random_matrix(coarse->size(), 2, 22);
  const auto y = unpool_up(g, SparseFeatureMap<double>{coarse, 1, g.input(x)}, fine);
  for (std::size_t r = 0; r < fine->size(); ++r) {
    const uint32_t p = coarse->find(parent_of((*fine)[r]));
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(g.value(y.features)(r, c), x(p, c));
  }
  auto orphan = table({{100, 100, 100}});
  EXPECT_THROW(unpool_up(g, SparseFeatureMap<double>{coarse, 1, g.input(x)}, orphan), Error);
}

TEST(Pointwise, ZeroWeightsGiveZero) {
  auto coords = table(testing::random_coords(10, 4, 23));
  ParamStore<double> ps;
  auto& w = ps.add("w", {3, 2}, true);
  Graph<double> g(false);
  const auto y = pointwise_linear(g, SparseFeatureMap<double>{coords, 0, g.input(random_matrix(10, 3, 24))}, w);
  for (double v : g.value(y.features).data) EXPECT_EQ(v, 0.0);
}

TEST(Pointwise, RandomMatchesMatrixProduct) {
  ParamStore<double> ps;
  auto& w = ps.add("w", {3, 2}, true);
  auto& b = ps.add("b", {2}, false);
  fill_random(w, 25);
  fill_random(b, 26);
  Graph<double> g(false);
  const M x = random_matrix(7, 3, 27);
  const M& y = g.value(linear(g, g.input(x), w, &b));
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 2; ++c) {
      double e = b.value[c];
      for (std::size_t k = 0; k < 3; ++k) e += x(r, k) * w.value[k * 2 + c];
      EXPECT_NEAR(y(r, c), e, 1e-14);
    }
}

TEST(Activation, ReluAndGelu) {
  Graph<double> g(false);
  M x(1, 4);
  x.data = {-2.0, -0.5, 0.5, 2.0};
  const M& r = g.value(activate(g, g.input(x), Activation::Relu));
  EXPECT_EQ(r.data, (std::vector<double>{0.0, 0.0, 0.5, 2.0}));
  const M& ge = g.value(activate(g, g.input(x), Activation::Gelu));
  for (std::size_t n = 0; n < 4; ++n)
    EXPECT_NEAR(ge.data[n], 0.5 * x.data[n] * (1.0 + std::erf(x.data[n] / std::sqrt(2.0))), 1e-15);
}

TEST(AddConcat, Shapes) {
  Graph<double> g(false);
  const M a = random_matrix(5, 2, 28), b = random_matrix(5, 3, 29);
  const M& c = g.value(concat(g, g.input(a), g.input(b)));
  ASSERT_EQ(c.cols, 5u);
  for (std::size_t r = 0; r < 5; ++r) {
    EXPECT_EQ(c(r, 0), a(r, 0));
    EXPECT_EQ(c(r, 4), b(r, 2));
  }
  const M& s = g.value(add(g, g.input(a), g.input(a)));
  for (std::size_t n = 0; n < s.data.size(); ++n) EXPECT_EQ(s.data[n], 2 * a.data[n]);
  EXPECT_THROW(add(g, g.input(a), g.input(b)), Error);
}

TEST(Bce, ZeroLogitsGiveLn2) {
  Graph<double> g(false);
  const std::vector<uint8_t> labels{0, 1, 1, 0, 1};
  const double l = g.value(bce_with_logits(g, g.input(M(5, 1, 0.0)), labels)).data[0];
  EXPECT_NEAR(l, std::log(2.0), 1e-15);
}

TEST(Bce, LargeLogitDoesNotOverflow) {
  Graph<double> g(false);
  const std::vector<uint8_t> one{1};
  const double l = g.value(bce_with_logits(g, g.input(M(1, 1, 20.0)), one)).data[0];
  EXPECT_NEAR(l, 2.06115362e-9, 1e-15);
  const std::vector<uint8_t> zero{0};
  const double big = g.value(bce_with_logits(g, g.input(M(1, 1, 800.0)), zero)).data[0];
  EXPECT_TRUE(std::isfinite(big));
  EXPECT_NEAR(big, 800.0, 1e-9);
}

TEST(Bce, MatchesExtendedPrecisionOracle) {
  std::mt19937_64 rng(30);
  std::normal_distribution<double> z(0.0, 4.0);
  M x(200, 1);
  std::vector<uint8_t> y(200);
  long double ref = 0;
  for (std::size_t n = 0; n < 200; ++n) {
    x.data[n] = z(rng);
    y[n] = rng() & 1;
    const long double zl = x.data[n];
    ref += y[n] ? std::log1p(std::exp(-zl)) : std::log1p(std::exp(zl));
  }
  ref /= 200;
  Graph<double> g(false);
  const double l = g.value(bce_with_logits(g, g.input(x), y)).data[0];
  EXPECT_NEAR(l, static_cast<double>(ref), 1e-12 * static_cast<double>(ref));
}

TEST(Backward, UnusedParameterHasZeroGradient) {
  ParamStore<double> ps;
  auto& used = ps.add("used", {2, 1}, true);
  auto& unused = ps.add("unused", {2, 1}, true);
  fill_random(used, 31);
  fill_random(unused, 32);
  Graph<double> g(true);
  const std::vector<uint8_t> y{1, 0, 1};
  g.backward(bce_with_logits(g, linear<double>(g, g.input(random_matrix(3, 2, 33)), used, nullptr), y));
  for (double v : unused.grad) EXPECT_EQ(v, 0.0);
  EXPECT_NE(used.grad[0], 0.0);
}

TEST(Backward, LogisticRegressionClosedForm) {
  ParamStore<double> ps;
  auto& w = ps.add("w", {3, 1}, true);
  fill_random(w, 34);
  const M x = random_matrix(6, 3, 35);
  const std::vector<uint8_t> y{1, 0, 0, 1, 1, 0};
  Graph<double> g(true);
  g.backward(bce_with_logits(g, linear<double>(g, g.input(x), w, nullptr), y));
  for (std::size_t k = 0; k < 3; ++k) {
    double e = 0;
    for (std::size_t r = 0; r < 6; ++r) {
      double z = 0;
      for (std::size_t c = 0; c < 3; ++c) z += x(r, c) * w.value[c];
      e += (1.0 / (1.0 + std::exp(-z)) - y[r]) * x(r, k);
    }
    EXPECT_NEAR(w.grad[k], e / 6.0, 1e-14);
  }
}

TEST(Backward, NonFiniteGradientRaises) {
  ParamStore<double> ps;
  auto& w = ps.add("w", {1, 1}, true);
  // d loss / d x = w, so an infinite weight poisons the input's gradient.
  w.value[0] = std::numeric_limits<double>::infinity();
  Graph<double> g(true);
  const Var z = linear<double>(g, g.input(M(1, 1, 1.0), true), w, nullptr);
  const std::vector<double> weight{1.0};
  const std::vector<Var> terms{z};
  try {
    g.backward(weighted_sum(g, std::span<const Var>(terms), std::span<const double>(weight)));
    FAIL() << "expected NumericalError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NumericalError);
  }
}

TEST(Gradcheck, EveryOpWithinTolerance) {
  const auto results = run_gradchecks(GradcheckOptions{});
  ASSERT_FALSE(results.empty());
  bool model_seen = false;
  for (const auto& r : results) {
    EXPECT_TRUE(r.passed) << r.op << " max rel error " << r.max_rel_error;
    EXPECT_LT(r.max_rel_error, 1e-4) << r.op;
    EXPECT_GT(r.checked, 0u) << r.op;
    model_seen |= r.op == "model";
  }
  EXPECT_TRUE(model_seen);
}

TEST(Gradcheck, RelativeErrorFloor) {
  EXPECT_DOUBLE_EQ(gradcheck_rel_error(1.0, 1.0, 1e-6), 0.0);
  EXPECT_DOUBLE_EQ(gradcheck_rel_error(0.0, 1e-8, 1e-6), 1e-2);
  EXPECT_DOUBLE_EQ(gradcheck_rel_error(2.0, 1.0, 1e-6), 0.5);
}

TEST(Adam, DefaultHyperparameters) {
  const AdamHyper h;
  EXPECT_DOUBLE_EQ(h.lr, 2e-3);
  EXPECT_DOUBLE_EQ(h.weight_decay, 5e-2);
}

TEST(Adam, ZeroGradientZeroDecayLeavesParameters) {
  ParamStore<double> ps;
  auto& w = ps.add("w", {4}, true);
  fill_random(w, 36);
  const auto before = w.value;
  AdamState<double> st;
  AdamHyper h;
  h.weight_decay = 0.0;
  for (int k = 0; k < 5; ++k) adam_step(ps, st, h, h.lr);
  EXPECT_EQ(w.value, before);
}

TEST(Adam, ScalarQuadraticMatchesReference) {
  // f(p) = 0.5 * a * (p - c)^2, AdamW written out by hand.
  const double a = 3.0, c = 0.7;
  AdamHyper h;
  ParamStore<double> ps;
  auto& w = ps.add("p", {1}, true);
  w.value[0] = -1.3;
  AdamState<double> st;
  double p = -1.3, m = 0, v = 0;
  for (int t = 1; t <= 200; ++t) {
    const double lr = cosine_lr(h.lr, t - 1, 200, 10);
    w.grad[0] = a * (w.value[0] - c);
    adam_step(ps, st, h, lr);
    const double gr = a * (p - c);
    p *= 1.0 - lr * h.weight_decay;
    m = h.beta1 * m + (1 - h.beta1) * gr;
    v = h.beta2 * v + (1 - h.beta2) * gr * gr;
    const double mh = m / (1 - std::pow(h.beta1, t)), vh = v / (1 - std::pow(h.beta2, t));
    p -= lr * mh / (std::sqrt(vh) + h.eps);
    ASSERT_NEAR(w.value[0], p, 1e-12) << "step " << t;
  }
  EXPECT_EQ(st.step, 200);
}

TEST(Adam, BiasesSkipDecay) {
  ParamStore<double> ps;
  auto& b = ps.add("b", {1}, false);
  b.value[0] = 1.0;
  AdamState<double> st;
  adam_step(ps, st, AdamHyper{}, 0.1);
  EXPECT_EQ(b.value[0], 1.0);
}

TEST(CosineLr, WarmupThenDecay) {
  EXPECT_DOUBLE_EQ(cosine_lr(1.0, 0, 100, 10), 0.1);
  EXPECT_DOUBLE_EQ(cosine_lr(1.0, 9, 100, 10), 1.0);
  EXPECT_DOUBLE_EQ(cosine_lr(1.0, 10, 100, 10), 1.0);
  EXPECT_NEAR(cosine_lr(1.0, 55, 100, 10), 0.5, 1e-12);
  EXPECT_NEAR(cosine_lr(1.0, 100, 100, 10, 0.01), 0.01, 1e-12);
}

TEST(Checkpoint, RoundTripIsExact) {
  for (int pass = 0; pass < 2; ++pass) {
    ParamStore<float> ps;
    auto& w = ps.add("enc.w", {27, 4, 8}, true);
    auto& b = ps.add("enc.b", {8}, false);
    std::mt19937_64 rng(37);
    std::normal_distribution<float> d;
    for (float& v : w.value) v = d(rng);
    for (float& v : b.value) v = d(rng);
    AdamState<float> st;
    for (float& v : w.grad) v = d(rng);
    adam_step(ps, st, AdamHyper{}, 1e-3);

    std::stringstream buf;
    write_checkpoint(buf, to_stored(ps, pass ? &st : nullptr));
    const std::string bytes = buf.str();
    EXPECT_EQ(bytes.substr(0, 9), "NOMAEckpt");

    ParamStore<float> back;
    back.add("enc.w", {27, 4, 8}, true);
    back.add("enc.b", {8}, false);
    AdamState<float> st2;
    std::stringstream in(bytes);
    from_stored(read_checkpoint(in), back, pass ? &st2 : nullptr);
    EXPECT_EQ(back.get("enc.w").value, w.value);
    EXPECT_EQ(back.get("enc.b").value, b.value);
    if (pass) {
      EXPECT_EQ(st2.step, st.step);
      EXPECT_EQ(st2.m, st.m);
      EXPECT_EQ(st2.v, st.v);
    }
    std::stringstream again;
    write_checkpoint(again, to_stored(back, pass ? &st2 : nullptr));
    EXPECT_EQ(again.str(), bytes);
  }
}

TEST(Checkpoint, RejectsCorruptInput) {
  ParamStore<double> ps;
  ps.add("w", {2, 2}, true);
  std::stringstream buf;
  write_checkpoint(buf, to_stored(ps, static_cast<const AdamState<double>*>(nullptr)));
  std::string bytes = buf.str();

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::stringstream a(bad_magic);
  try {
    read_checkpoint(a);
    FAIL() << "expected FormatError";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::FormatError);
  }
  std::stringstream b(bytes.substr(0, bytes.size() - 3));
  EXPECT_THROW(read_checkpoint(b), Error);

  ParamStore<double> other;
  other.add("w", {4}, true);
  std::stringstream c(bytes);
  EXPECT_THROW(from_stored(read_checkpoint(c), other, static_cast<AdamState<double>*>(nullptr)), Error);
}

}  // namespace
}  // namespace nomae::nn
