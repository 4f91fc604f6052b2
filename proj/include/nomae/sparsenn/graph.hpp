#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nomae/coord.hpp"
#include "nomae/sparsenn/tensor.hpp"

namespace nomae::nn {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Tape-based reverse-mode differentiation. Nodes are appended in evaluation
// order, so reverse creation order is a valid topological order for backward.
template <class Real>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Matrix<Real>& out_grad)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Var input(Matrix<Real> value, bool requires_grad = false);

  // `requires_grad` should be true when any input needs a gradient or the op
  // owns parameters. `fn` is dropped when gradients are disabled.
  Var record(const char* op, Matrix<Real> value, bool requires_grad, BackwardFn fn);

  const Matrix<Real>& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).value; }
  bool requires_grad(Var v) const { return grad_enabled_ && nodes_.at(static_cast<std::size_t>(v.id)).requires_grad; }
  bool grad_enabled() const { return grad_enabled_; }

  // Gradient buffer of a node, zero-allocated on first access.
  Matrix<Real>& grad(Var v);
  bool has_grad(Var v) const { return !nodes_.at(static_cast<std::size_t>(v.id)).grad.empty(); }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded backward function.
  // Non-finite gradients raise NumericalError naming the offending node.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op = "";
    Matrix<Real> value;
    Matrix<Real> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_;
};

using CoordTablePtr = std::shared_ptr<const CoordTable>;

template <class Real>
struct SparseFeatureMap {
  CoordTablePtr coords;
  int scale = 0;
  Var features;

  std::size_t size() const { return coords ? coords->size() : 0; }
};

// Gather/scatter pairs of a sparse convolution: for kernel tap t (offset
// `offsets[t]`), every pair (in_row, out_row) satisfies
// out_coord + offsets[t] == in_coord.
struct Rulebook {
  CoordTablePtr in;
  CoordTablePtr out;
  int reach = 0;
  std::vector<Coord> offsets;
  std::vector<std::vector<std::pair<uint32_t, uint32_t>>> pairs;

  std::size_t taps() const { return offsets.size(); }
  std::size_t num_pairs() const;
};

using RulebookPtr = std::shared_ptr<const Rulebook>;

// Output sites equal input sites.
RulebookPtr submanifold_rulebook(CoordTablePtr coords, int reach);
// Output sites are the input sites plus their Chebyshev dilation by `reach`.
RulebookPtr expansion_rulebook(CoordTablePtr in, int reach);

// Parent row (in `coarse`) of every row of `fine`; MissingParent when absent.
std::vector<uint32_t> parent_rows(const CoordTable& fine, const CoordTable& coarse);

CoordTablePtr pooled_coords(const CoordTable& fine);

enum class Activation { Relu, Gelu };

// ---- dense row-wise kernels ----

template <class Real>
Var linear(Graph<Real>& g, Var x, ParamTensor<Real>& weight, ParamTensor<Real>* bias);

template <class Real>
Var sparse_conv(Graph<Real>& g, Var x, const RulebookPtr& rules, ParamTensor<Real>& weight, ParamTensor<Real>* bias);

template <class Real>
Var activate(Graph<Real>& g, Var x, Activation act);

template <class Real>
Var add(Graph<Real>& g, Var a, Var b);

template <class Real>
Var concat(Graph<Real>& g, Var a, Var b);

// Mean of rows sharing a group id; `group[r]` < num_groups.
template <class Real>
Var group_mean(Graph<Real>& g, Var x, std::shared_ptr<const std::vector<uint32_t>> group, std::size_t num_groups);

// out[r] = x[source[r]]
template <class Real>
Var gather_rows(Graph<Real>& g, Var x, std::shared_ptr<const std::vector<uint32_t>> source);

// out has `rows` rows; out[dest[r]] = x[r], other rows zero. `dest` must be injective.
template <class Real>
Var scatter_rows(Graph<Real>& g, Var x, std::shared_ptr<const std::vector<uint32_t>> dest, std::size_t rows);

// Mean binary cross-entropy over a column of logits, in the overflow-free form
// max(z,0) - z*y + log(1 + exp(-|z|)).
template <class Real>
Var bce_with_logits(Graph<Real>& g, Var logits, std::span<const uint8_t> labels);

// Scalar sum_i weights[i] * terms[i] over 1x1 nodes.
template <class Real>
Var weighted_sum(Graph<Real>& g, std::span<const Var> terms, std::span<const double> weights);

// ---- sparse-map level operations ----

template <class Real>
SparseFeatureMap<Real> submanifold_conv(Graph<Real>& g, const SparseFeatureMap<Real>& x, const RulebookPtr& rules,
                                        ParamTensor<Real>& weight, ParamTensor<Real>* bias = nullptr);

template <class Real>
SparseFeatureMap<Real> expansion_conv(Graph<Real>& g, const SparseFeatureMap<Real>& x, const RulebookPtr& rules,
                                      ParamTensor<Real>& weight, ParamTensor<Real>* bias = nullptr);

template <class Real>
SparseFeatureMap<Real> pool_down(Graph<Real>& g, const SparseFeatureMap<Real>& x);

// Broadcasts every parent feature to the requested finer coordinates.
template <class Real>
SparseFeatureMap<Real> unpool_up(Graph<Real>& g, const SparseFeatureMap<Real>& coarse, CoordTablePtr fine);

template <class Real>
SparseFeatureMap<Real> pointwise_linear(Graph<Real>& g, const SparseFeatureMap<Real>& x, ParamTensor<Real>& weight,
                                        ParamTensor<Real>* bias = nullptr);

template <class Real>
SparseFeatureMap<Real> activation(Graph<Real>& g, const SparseFeatureMap<Real>& x, Activation act);

template <class Real>
SparseFeatureMap<Real> add(Graph<Real>& g, const SparseFeatureMap<Real>& a, const SparseFeatureMap<Real>& b);

template <class Real>
SparseFeatureMap<Real> concat(Graph<Real>& g, const SparseFeatureMap<Real>& a, const SparseFeatureMap<Real>& b);

}  // namespace nomae::nn
