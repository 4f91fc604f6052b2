#include "nomae/sparsenn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "nomae/error.hpp"

namespace nomae::nn {

// ---------------------------------------------------------------- graph

template <class Real>
Var Graph<Real>::input(Matrix<Real> value, bool requires_grad) {
  return record("input", std::move(value), requires_grad, nullptr);
}

template <class Real>
Var Graph<Real>::record(const char* op, Matrix<Real> value, bool requires_grad, BackwardFn fn) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  node.requires_grad = grad_enabled_ && requires_grad;
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <class Real>
Matrix<Real>& Graph<Real>::grad(Var v) {
  Node& n = nodes_.at(static_cast<std::size_t>(v.id));
  if (n.grad.empty() && !n.value.empty()) n.grad = Matrix<Real>(n.value.rows, n.value.cols);
  return n.grad;
}

template <class Real>
void Graph<Real>::backward(Var loss) {
  require(grad_enabled_, ErrorKind::InvalidConfig, "graph was built without gradient tracking");
  const Node& root = nodes_.at(static_cast<std::size_t>(loss.id));
  require(root.value.rows == 1 && root.value.cols == 1, ErrorKind::ShapeError, "backward needs a scalar loss");
  if (!root.requires_grad) return;
  grad(loss).data[0] = Real(1);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.empty()) continue;
    for (Real v : n.grad.data)
      if (!std::isfinite(v))
        fail(ErrorKind::NumericalError, "non-finite gradient at node " + std::to_string(id) + " (" + n.op + ")");
    if (n.backward) {
      // The closure may allocate gradients of other nodes but never appends
      // nodes, so the reference stays valid.
      n.backward(*this, n.grad);
    }
  }
}

// ---------------------------------------------------------------- rulebooks

std::size_t Rulebook::num_pairs() const {
  std::size_t n = 0;
  for (const auto& p : pairs) n += p.size();
  return n;
}

RulebookPtr submanifold_rulebook(CoordTablePtr coords, int reach) {
  require(coords != nullptr, ErrorKind::ShapeError, "rulebook needs coordinates");
  require(reach >= 0, ErrorKind::InvalidConfig, "convolution reach must be >= 0");
  auto rbp = std::make_shared<Rulebook>();
  Rulebook& rb = *rbp;
  rb.in = coords;
  rb.out = coords;
  rb.reach = reach;
  rb.offsets = cube_offsets(reach);
  rb.pairs.resize(rb.offsets.size());
  const CoordTable& table = *coords;
  for (std::size_t t = 0; t < rb.offsets.size(); ++t) {
    auto& list = rb.pairs[t];
    for (uint32_t o = 0; o < table.size(); ++o) {
      const uint32_t i = table.find(table[o] + rb.offsets[t]);
      if (i != CoordIndex::kNotFound) list.emplace_back(i, o);
    }
  }
  return rbp;
}

RulebookPtr expansion_rulebook(CoordTablePtr in, int reach) {
  require(in != nullptr, ErrorKind::ShapeError, "rulebook needs coordinates");
  require(reach >= 1, ErrorKind::InvalidConfig, "expansion reach must be >= 1");
  auto rbp = std::make_shared<Rulebook>();
  Rulebook& rb = *rbp;
  rb.in = in;
  rb.reach = reach;
  rb.offsets = cube_offsets(reach);
  std::vector<Coord> out_coords;
  out_coords.reserve(in->size() * 8);
  {
    CoordIndex seen(in->size() * 8);
    for (const Coord& c : *in)
      for (const Coord& d : rb.offsets)
        if (seen.insert(c - d, 0)) out_coords.push_back(c - d);
  }
  rb.out = std::make_shared<const CoordTable>(std::move(out_coords));
  const CoordTable& out = *rb.out;
  rb.pairs.resize(rb.offsets.size());
  for (std::size_t t = 0; t < rb.offsets.size(); ++t) {
    auto& list = rb.pairs[t];
    list.reserve(in->size());
    for (uint32_t i = 0; i < in->size(); ++i) list.emplace_back(i, out.find((*in)[i] - rb.offsets[t]));
  }
  return rbp;
}

std::vector<uint32_t> parent_rows(const CoordTable& fine, const CoordTable& coarse) {
  std::vector<uint32_t> rows(fine.size());
  for (std::size_t n = 0; n < fine.size(); ++n) {
    rows[n] = coarse.find(parent_of(fine[n]));
    if (rows[n] == CoordIndex::kNotFound) fail(ErrorKind::MissingParent, "fine coordinate has no parent feature");
  }
  return rows;
}

CoordTablePtr pooled_coords(const CoordTable& fine) {
  std::vector<Coord> parents;
  parents.reserve(fine.size());
  for (const Coord& c : fine) parents.push_back(parent_of(c));
  return std::make_shared<const CoordTable>(std::move(parents));
}

// ---------------------------------------------------------------- kernels

namespace {

void check_param(bool ok, const std::string& name, const std::string& what) {
  if (!ok) fail(ErrorKind::ShapeError, "parameter '" + name + "': " + what);
}

template <class Real>
bool any_grad(Graph<Real>& g, Var x) {
  return g.requires_grad(x);
}

template <class Real>
Real gelu(Real x) {
  return Real(0.5) * x * (Real(1) + std::erf(x * Real(0.70710678118654752440)));
}

template <class Real>
Real gelu_grad(Real x) {
  const Real cdf = Real(0.5) * (Real(1) + std::erf(x * Real(0.70710678118654752440)));
  const Real pdf = Real(0.39894228040143267794) * std::exp(Real(-0.5) * x * x);
  return cdf + x * pdf;
}

}  // namespace

template <class Real>
Var linear(Graph<Real>& g, Var x, ParamTensor<Real>& weight, ParamTensor<Real>* bias) {
  const Matrix<Real>& in = g.value(x);
  check_param(weight.shape.size() == 2 && weight.shape[0] == in.cols, weight.name, "expected [C_in x C_out] weight");
  const std::size_t cin = weight.shape[0], cout = weight.shape[1];
  if (bias) check_param(bias->numel() == cout, bias->name, "bias length must equal C_out");
  Matrix<Real> out(in.rows, cout);
  for (std::size_t r = 0; r < in.rows; ++r) {
    Real* y = out.row(r);
    if (bias) std::copy(bias->value.begin(), bias->value.end(), y);
    const Real* xr = in.row(r);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const Real xv = xr[ci];
      const Real* w = weight.value.data() + ci * cout;
      for (std::size_t co = 0; co < cout; ++co) y[co] += xv * w[co];
    }
  }
  ParamTensor<Real>* W = &weight;
  return g.record("linear", std::move(out), true, [x, W, bias, cin, cout](Graph<Real>& gr, const Matrix<Real>& dy) {
    const Matrix<Real>& in = gr.value(x);
    const bool need_dx = gr.requires_grad(x);
    Matrix<Real>* dx = need_dx ? &gr.grad(x) : nullptr;
    for (std::size_t r = 0; r < in.rows; ++r) {
      const Real* dyr = dy.row(r);
      const Real* xr = in.row(r);
      if (bias)
        for (std::size_t co = 0; co < cout; ++co) bias->grad[co] += dyr[co];
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const Real* w = W->value.data() + ci * cout;
        Real* dw = W->grad.data() + ci * cout;
        const Real xv = xr[ci];
        Real acc = 0;
        for (std::size_t co = 0; co < cout; ++co) {
          dw[co] += xv * dyr[co];
          acc += w[co] * dyr[co];
        }
        if (dx) dx->row(r)[ci] += acc;
      }
    }
  });
}

namespace {

using Pairs = std::vector<std::pair<uint32_t, uint32_t>>;

// y[o] += W_t^T x[i] over the pairs of one tap. CO > 0 fixes the output width
// at compile time so the accumulator row stays in registers.
template <class Real, std::size_t CO>
void tap_forward(const Matrix<Real>& in, Matrix<Real>& out, const Real* wt, std::size_t cin, std::size_t cout_rt,
                 const Pairs& pairs) {
  const std::size_t cout = CO > 0 ? CO : cout_rt;
  for (const auto& [i, o] : pairs) {
    const Real* xr = in.row(i);
    Real* y = out.row(o);
    if constexpr (CO > 0) {
      Real acc[CO];
      for (std::size_t co = 0; co < CO; ++co) acc[co] = y[co];
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const Real xv = xr[ci];
        const Real* w = wt + ci * CO;
        for (std::size_t co = 0; co < CO; ++co) acc[co] += xv * w[co];
      }
      for (std::size_t co = 0; co < CO; ++co) y[co] = acc[co];
    } else {
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const Real xv = xr[ci];
        const Real* w = wt + ci * cout;
        for (std::size_t co = 0; co < cout; ++co) y[co] += xv * w[co];
      }
    }
  }
}

template <class Real, std::size_t CO>
void tap_backward(const Matrix<Real>& in, const Matrix<Real>& dy, Matrix<Real>* dx, const Real* wt, Real* dwt,
                  std::size_t cin, std::size_t cout_rt, const Pairs& pairs) {
  const std::size_t cout = CO > 0 ? CO : cout_rt;
  for (const auto& [i, o] : pairs) {
    const Real* xr = in.row(i);
    const Real* g = dy.row(o);
    Real* dxr = dx ? dx->row(i) : nullptr;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const Real xv = xr[ci];
      const Real* w = wt + ci * cout;
      Real* dw = dwt + ci * cout;
      Real acc = 0;
      if constexpr (CO > 0) {
        for (std::size_t co = 0; co < CO; ++co) {
          dw[co] += xv * g[co];
          acc += w[co] * g[co];
        }
      } else {
        for (std::size_t co = 0; co < cout; ++co) {
          dw[co] += xv * g[co];
          acc += w[co] * g[co];
        }
      }
      if (dxr) dxr[ci] += acc;
    }
  }
}

template <class F>
void dispatch_width(std::size_t cout, F&& f) {
  switch (cout) {
    case 1: f(std::integral_constant<std::size_t, 1>{}); break;
    case 2: f(std::integral_constant<std::size_t, 2>{}); break;
    case 4: f(std::integral_constant<std::size_t, 4>{}); break;
    case 8: f(std::integral_constant<std::size_t, 8>{}); break;
    case 16: f(std::integral_constant<std::size_t, 16>{}); break;
    case 32: f(std::integral_constant<std::size_t, 32>{}); break;
    default: f(std::integral_constant<std::size_t, 0>{}); break;
  }
}

}  // namespace

template <class Real>
Var sparse_conv(Graph<Real>& g, Var x, const RulebookPtr& rules, ParamTensor<Real>& weight, ParamTensor<Real>* bias) {
  const Rulebook& rb_ref = *rules;
  const Matrix<Real>& in = g.value(x);
  require(in.rows == rb_ref.in->size(), ErrorKind::ShapeError, "feature rows do not match rulebook input sites");
  check_param(weight.shape.size() == 3 && weight.shape[0] == rb_ref.taps() && weight.shape[1] == in.cols, weight.name,
              "expected [taps x C_in x C_out] weight matching the rulebook");
  const std::size_t cin = weight.shape[1], cout = weight.shape[2];
  if (bias) check_param(bias->numel() == cout, bias->name, "bias length must equal C_out");
  Matrix<Real> out(rb_ref.out->size(), cout);
  if (bias)
    for (std::size_t r = 0; r < out.rows; ++r) std::copy(bias->value.begin(), bias->value.end(), out.row(r));
  dispatch_width(cout, [&](auto width) {
    for (std::size_t t = 0; t < rb_ref.taps(); ++t)
      tap_forward<Real, width()>(in, out, weight.value.data() + t * cin * cout, cin, cout, rb_ref.pairs[t]);
  });
  ParamTensor<Real>* W = &weight;
  RulebookPtr rb = rules;
  return g.record("sparse_conv", std::move(out), true,
                  [x, W, bias, rb, cin, cout](Graph<Real>& gr, const Matrix<Real>& dy) {
                    const Matrix<Real>& in = gr.value(x);
                    Matrix<Real>* dx = gr.requires_grad(x) ? &gr.grad(x) : nullptr;
                    if (bias)
                      for (std::size_t r = 0; r < dy.rows; ++r)
                        for (std::size_t co = 0; co < cout; ++co) bias->grad[co] += dy(r, co);
                    dispatch_width(cout, [&](auto width) {
                      for (std::size_t t = 0; t < rb->taps(); ++t)
                        tap_backward<Real, width()>(in, dy, dx, W->value.data() + t * cin * cout,
                                                    W->grad.data() + t * cin * cout, cin, cout, rb->pairs[t]);
                    });
                  });
}

template <class Real>
Var activate(Graph<Real>& g, Var x, Activation act) {
  Matrix<Real> out = g.value(x);
  if (act == Activation::Relu) {
    for (Real& v : out.data) v = v > Real(0) ? v : Real(0);
  } else {
    for (Real& v : out.data) v = gelu(v);
  }
  return g.record(act == Activation::Relu ? "relu" : "gelu", std::move(out), any_grad(g, x),
                  [x, act](Graph<Real>& gr, const Matrix<Real>& dy) {
                    const Matrix<Real>& in = gr.value(x);
                    Matrix<Real>& dx = gr.grad(x);
                    for (std::size_t n = 0; n < in.data.size(); ++n) {
                      const Real d = act == Activation::Relu ? (in.data[n] > Real(0) ? Real(1) : Real(0))
                                                             : gelu_grad(in.data[n]);
                      dx.data[n] += d * dy.data[n];
                    }
                  });
}

template <class Real>
Var add(Graph<Real>& g, Var a, Var b) {
  const Matrix<Real>& va = g.value(a);
  const Matrix<Real>& vb = g.value(b);
  require(va.rows == vb.rows && va.cols == vb.cols, ErrorKind::ShapeError, "add needs equal shapes");
  Matrix<Real> out = va;
  for (std::size_t n = 0; n < out.data.size(); ++n) out.data[n] += vb.data[n];
  return g.record("add", std::move(out), any_grad(g, a) || any_grad(g, b),
                  [a, b](Graph<Real>& gr, const Matrix<Real>& dy) {
                    for (Var v : {a, b}) {
                      if (!gr.requires_grad(v)) continue;
                      Matrix<Real>& dx = gr.grad(v);
                      for (std::size_t n = 0; n < dy.data.size(); ++n) dx.data[n] += dy.data[n];
                    }
                  });
}

template <class Real>
Var concat(Graph<Real>& g, Var a, Var b) {
  const Matrix<Real>& va = g.value(a);
  const Matrix<Real>& vb = g.value(b);
  require(va.rows == vb.rows, ErrorKind::ShapeError, "concat needs equal row counts");
  const std::size_t ca = va.cols, cb = vb.cols;
  Matrix<Real> out(va.rows, ca + cb);
  for (std::size_t r = 0; r < va.rows; ++r) {
    std::copy(va.row(r), va.row(r) + ca, out.row(r));
    std::copy(vb.row(r), vb.row(r) + cb, out.row(r) + ca);
  }
  return g.record("concat", std::move(out), any_grad(g, a) || any_grad(g, b),
                  [a, b, ca, cb](Graph<Real>& gr, const Matrix<Real>& dy) {
                    if (gr.requires_grad(a)) {
                      Matrix<Real>& dx = gr.grad(a);
                      for (std::size_t r = 0; r < dy.rows; ++r)
                        for (std::size_t c = 0; c < ca; ++c) dx(r, c) += dy(r, c);
                    }
                    if (gr.requires_grad(b)) {
                      Matrix<Real>& dx = gr.grad(b);
                      for (std::size_t r = 0; r < dy.rows; ++r)
                        for (std::size_t c = 0; c < cb; ++c) dx(r, c) += dy(r, ca + c);
                    }
                  });
}

template <class Real>
Var group_mean(Graph<Real>& g, Var x, std::shared_ptr<const std::vector<uint32_t>> group, std::size_t num_groups) {
  const Matrix<Real>& in = g.value(x);
  require(group->size() == in.rows, ErrorKind::ShapeError, "group index length must equal row count");
  auto counts = std::make_shared<std::vector<uint32_t>>(num_groups, 0);
  for (uint32_t p : *group) {
    require(p < num_groups, ErrorKind::ShapeError, "group index out of range");
    (*counts)[p] += 1;
  }
  Matrix<Real> out(num_groups, in.cols);
  for (std::size_t r = 0; r < in.rows; ++r) {
    Real* y = out.row((*group)[r]);
    const Real* xr = in.row(r);
    for (std::size_t c = 0; c < in.cols; ++c) y[c] += xr[c];
  }
  for (std::size_t p = 0; p < num_groups; ++p) {
    require((*counts)[p] > 0, ErrorKind::ShapeError, "empty pooling group");
    const Real inv = Real(1) / static_cast<Real>((*counts)[p]);
    for (std::size_t c = 0; c < in.cols; ++c) out(p, c) *= inv;
  }
  return g.record("group_mean", std::move(out), any_grad(g, x),
                  [x, group, counts](Graph<Real>& gr, const Matrix<Real>& dy) {
                    Matrix<Real>& dx = gr.grad(x);
                    for (std::size_t r = 0; r < dx.rows; ++r) {
                      const uint32_t p = (*group)[r];
                      const Real inv = Real(1) / static_cast<Real>((*counts)[p]);
                      for (std::size_t c = 0; c < dx.cols; ++c) dx(r, c) += dy(p, c) * inv;
                    }
                  });
}

template <class Real>
Var gather_rows(Graph<Real>& g, Var x, std::shared_ptr<const std::vector<uint32_t>> source) {
  const Matrix<Real>& in = g.value(x);
  Matrix<Real> out(source->size(), in.cols);
  for (std::size_t r = 0; r < source->size(); ++r) {
    const uint32_t s = (*source)[r];
    require(s < in.rows, ErrorKind::ShapeError, "gather index out of range");
    std::copy(in.row(s), in.row(s) + in.cols, out.row(r));
  }
  return g.record("gather_rows", std::move(out), any_grad(g, x), [x, source](Graph<Real>& gr, const Matrix<Real>& dy) {
    Matrix<Real>& dx = gr.grad(x);
    for (std::size_t r = 0; r < dy.rows; ++r) {
      Real* d = dx.row((*source)[r]);
      for (std::size_t c = 0; c < dy.cols; ++c) d[c] += dy(r, c);
    }
  });
}

template <class Real>
Var scatter_rows(Graph<Real>& g, Var x, std::shared_ptr<const std::vector<uint32_t>> dest, std::size_t rows) {
  const Matrix<Real>& in = g.value(x);
  require(dest->size() == in.rows, ErrorKind::ShapeError, "scatter index length must equal row count");
  Matrix<Real> out(rows, in.cols);
  for (std::size_t r = 0; r < in.rows; ++r) {
    const uint32_t d = (*dest)[r];
    require(d < rows, ErrorKind::ShapeError, "scatter index out of range");
    std::copy(in.row(r), in.row(r) + in.cols, out.row(d));
  }
  return g.record("scatter_rows", std::move(out), any_grad(g, x), [x, dest](Graph<Real>& gr, const Matrix<Real>& dy) {
    Matrix<Real>& dx = gr.grad(x);
    for (std::size_t r = 0; r < dx.rows; ++r) {
      const Real* d = dy.row((*dest)[r]);
      for (std::size_t c = 0; c < dx.cols; ++c) dx(r, c) += d[c];
    }
  });
}

template <class Real>
Var bce_with_logits(Graph<Real>& g, Var logits, std::span<const uint8_t> labels) {
  const Matrix<Real>& z = g.value(logits);
  require(z.cols == 1, ErrorKind::ShapeError, "logits must be a single column");
  require(z.rows == labels.size(), ErrorKind::AlignmentError, "logit and label counts differ");
  require(z.rows > 0, ErrorKind::EmptyScale, "no logits to score");
  auto y = std::make_shared<std::vector<uint8_t>>(labels.begin(), labels.end());
  // Accumulate in double so the 32-bit path does not lose the small terms.
  double total = 0.0;
  for (std::size_t n = 0; n < z.rows; ++n) {
    const double v = static_cast<double>(z.data[n]);
    require(std::isfinite(v), ErrorKind::NumericalError, "non-finite logit");
    require((*y)[n] <= 1, ErrorKind::ShapeError, "labels must be binary");
    total += std::max(v, 0.0) - v * (*y)[n] + std::log1p(std::exp(-std::abs(v)));
  }
  Matrix<Real> out(1, 1, static_cast<Real>(total / static_cast<double>(z.rows)));
  return g.record("bce_with_logits", std::move(out), any_grad(g, logits),
                  [logits, y](Graph<Real>& gr, const Matrix<Real>& dy) {
                    const Matrix<Real>& z = gr.value(logits);
                    Matrix<Real>& dz = gr.grad(logits);
                    const Real scale = dy.data[0] / static_cast<Real>(z.rows);
                    for (std::size_t n = 0; n < z.rows; ++n) {
                      const Real v = z.data[n];
                      // Stable sigmoid.
                      const Real sig = v >= Real(0) ? Real(1) / (Real(1) + std::exp(-v))
                                                    : std::exp(v) / (Real(1) + std::exp(v));
                      dz.data[n] += (sig - static_cast<Real>((*y)[n])) * scale;
                    }
                  });
}

template <class Real>
Var weighted_sum(Graph<Real>& g, std::span<const Var> terms, std::span<const double> weights) {
  require(terms.size() == weights.size() && !terms.empty(), ErrorKind::ShapeError, "weighted_sum needs matched terms");
  double total = 0.0;
  bool needs = false;
  for (std::size_t n = 0; n < terms.size(); ++n) {
    const Matrix<Real>& v = g.value(terms[n]);
    require(v.rows == 1 && v.cols == 1, ErrorKind::ShapeError, "weighted_sum terms must be scalars");
    total += weights[n] * static_cast<double>(v.data[0]);
    needs = needs || g.requires_grad(terms[n]);
  }
  std::vector<Var> t(terms.begin(), terms.end());
  std::vector<double> w(weights.begin(), weights.end());
  return g.record("weighted_sum", Matrix<Real>(1, 1, static_cast<Real>(total)), needs,
                  [t = std::move(t), w = std::move(w)](Graph<Real>& gr, const Matrix<Real>& dy) {
                    for (std::size_t n = 0; n < t.size(); ++n)
                      if (gr.requires_grad(t[n])) gr.grad(t[n]).data[0] += static_cast<Real>(w[n]) * dy.data[0];
                  });
}

// ---------------------------------------------------------------- sparse maps

namespace {

bool same_coords(const CoordTablePtr& a, const CoordTablePtr& b) { return a == b || (a && b && *a == *b); }

}  // namespace

template <class Real>
SparseFeatureMap<Real> submanifold_conv(Graph<Real>& g, const SparseFeatureMap<Real>& x, const RulebookPtr& rules,
                                        ParamTensor<Real>& weight, ParamTensor<Real>* bias) {
  require(rules->in == rules->out && same_coords(rules->in, x.coords), ErrorKind::AlignmentError,
          "submanifold rulebook does not match the feature map");
  return {x.coords, x.scale, sparse_conv(g, x.features, rules, weight, bias)};
}

template <class Real>
SparseFeatureMap<Real> expansion_conv(Graph<Real>& g, const SparseFeatureMap<Real>& x, const RulebookPtr& rules,
                                      ParamTensor<Real>& weight, ParamTensor<Real>* bias) {
  require(same_coords(rules->in, x.coords), ErrorKind::AlignmentError, "expansion rulebook does not match the map");
  return {rules->out, x.scale, sparse_conv(g, x.features, rules, weight, bias)};
}

template <class Real>
SparseFeatureMap<Real> pool_down(Graph<Real>& g, const SparseFeatureMap<Real>& x) {
  CoordTablePtr coarse = pooled_coords(*x.coords);
  auto group = std::make_shared<const std::vector<uint32_t>>(parent_rows(*x.coords, *coarse));
  return {coarse, x.scale + 1, group_mean(g, x.features, group, coarse->size())};
}

template <class Real>
SparseFeatureMap<Real> unpool_up(Graph<Real>& g, const SparseFeatureMap<Real>& coarse, CoordTablePtr fine) {
  auto source = std::make_shared<const std::vector<uint32_t>>(parent_rows(*fine, *coarse.coords));
  return {fine, coarse.scale - 1, gather_rows(g, coarse.features, source)};
}

template <class Real>
SparseFeatureMap<Real> pointwise_linear(Graph<Real>& g, const SparseFeatureMap<Real>& x, ParamTensor<Real>& weight,
                                        ParamTensor<Real>* bias) {
  return {x.coords, x.scale, linear(g, x.features, weight, bias)};
}

template <class Real>
SparseFeatureMap<Real> activation(Graph<Real>& g, const SparseFeatureMap<Real>& x, Activation act) {
  return {x.coords, x.scale, activate(g, x.features, act)};
}

template <class Real>
SparseFeatureMap<Real> add(Graph<Real>& g, const SparseFeatureMap<Real>& a, const SparseFeatureMap<Real>& b) {
  require(a.scale == b.scale && same_coords(a.coords, b.coords), ErrorKind::AlignmentError,
          "add needs identical coordinate sets");
  return {a.coords, a.scale, add(g, a.features, b.features)};
}

template <class Real>
SparseFeatureMap<Real> concat(Graph<Real>& g, const SparseFeatureMap<Real>& a, const SparseFeatureMap<Real>& b) {
  require(a.scale == b.scale && same_coords(a.coords, b.coords), ErrorKind::AlignmentError,
          "concat needs identical coordinate sets");
  return {a.coords, a.scale, concat(g, a.features, b.features)};
}

#define NOMAE_INSTANTIATE(Real)                                                                                      \
  template class Graph<Real>;                                                                                        \
  template Var linear(Graph<Real>&, Var, ParamTensor<Real>&, ParamTensor<Real>*);                                    \
  template Var sparse_conv(Graph<Real>&, Var, const RulebookPtr&, ParamTensor<Real>&, ParamTensor<Real>*);              \
  template Var activate(Graph<Real>&, Var, Activation);                                                              \
  template Var add(Graph<Real>&, Var, Var);                                                                          \
  template Var concat(Graph<Real>&, Var, Var);                                                                       \
  template Var group_mean(Graph<Real>&, Var, std::shared_ptr<const std::vector<uint32_t>>, std::size_t);             \
  template Var gather_rows(Graph<Real>&, Var, std::shared_ptr<const std::vector<uint32_t>>);                         \
  template Var scatter_rows(Graph<Real>&, Var, std::shared_ptr<const std::vector<uint32_t>>, std::size_t);           \
  template Var bce_with_logits(Graph<Real>&, Var, std::span<const uint8_t>);                                         \
  template Var weighted_sum(Graph<Real>&, std::span<const Var>, std::span<const double>);                            \
  template SparseFeatureMap<Real> submanifold_conv(Graph<Real>&, const SparseFeatureMap<Real>&, const RulebookPtr&,     \
                                                   ParamTensor<Real>&, ParamTensor<Real>*);                          \
  template SparseFeatureMap<Real> expansion_conv(Graph<Real>&, const SparseFeatureMap<Real>&, const RulebookPtr&,       \
                                                 ParamTensor<Real>&, ParamTensor<Real>*);                            \
  template SparseFeatureMap<Real> pool_down(Graph<Real>&, const SparseFeatureMap<Real>&);                            \
  template SparseFeatureMap<Real> unpool_up(Graph<Real>&, const SparseFeatureMap<Real>&, CoordTablePtr);             \
  template SparseFeatureMap<Real> pointwise_linear(Graph<Real>&, const SparseFeatureMap<Real>&, ParamTensor<Real>&,  \
                                                   ParamTensor<Real>*);                                              \
  template SparseFeatureMap<Real> activation(Graph<Real>&, const SparseFeatureMap<Real>&, Activation);               \
  template SparseFeatureMap<Real> add(Graph<Real>&, const SparseFeatureMap<Real>&, const SparseFeatureMap<Real>&);   \
  template SparseFeatureMap<Real> concat(Graph<Real>&, const SparseFeatureMap<Real>&, const SparseFeatureMap<Real>&);

NOMAE_INSTANTIATE(float)
NOMAE_INSTANTIATE(double)

#undef NOMAE_INSTANTIATE

}  // namespace nomae::nn
