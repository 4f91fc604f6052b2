#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <string_view>
#include <vector>

namespace nomae::nn {

// Row-major dense matrix; rows are sparse sites, columns are channels.
template <class Real>
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Real> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, Real fill = Real(0)) : rows(r), cols(c), data(r * c, fill) {}

  Real* row(std::size_t r) { return data.data() + r * cols; }
  const Real* row(std::size_t r) const { return data.data() + r * cols; }
  Real& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  bool empty() const { return data.empty(); }
};

template <class Real>
struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<Real> value;
  std::vector<Real> grad;
  bool decay = true;  // AdamW weight decay applies

  std::size_t numel() const { return value.size(); }
};

// Named parameters in insertion order. References stay valid as tensors are
// added (deque storage).
template <class Real>
class ParamStore {
 public:
  ParamTensor<Real>& add(std::string name, std::vector<std::size_t> shape, bool decay);

  ParamTensor<Real>& get(std::string_view name);
  const ParamTensor<Real>& get(std::string_view name) const;
  const ParamTensor<Real>* find(std::string_view name) const;

  std::deque<ParamTensor<Real>>& tensors() { return tensors_; }
  const std::deque<ParamTensor<Real>>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }
  std::size_t numel() const;

  void zero_grad();

 private:
  std::deque<ParamTensor<Real>> tensors_;
};

}  // namespace nomae::nn
