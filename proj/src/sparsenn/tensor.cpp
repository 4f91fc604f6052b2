#include "nomae/sparsenn/tensor.hpp"

#include <algorithm>

#include "nomae/error.hpp"

namespace nomae::nn {

template <class Real>
ParamTensor<Real>& ParamStore<Real>::add(std::string name, std::vector<std::size_t> shape, bool decay) {
  require(find(name) == nullptr, ErrorKind::InvalidConfig, "duplicate parameter '" + name + "'");
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  ParamTensor<Real>& t = tensors_.emplace_back();
  t.name = std::move(name);
  t.shape = std::move(shape);
  t.value.assign(n, Real(0));
  t.grad.assign(n, Real(0));
  t.decay = decay;
  return t;
}

template <class Real>
const ParamTensor<Real>* ParamStore<Real>::find(std::string_view name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return &t;
  return nullptr;
}

template <class Real>
ParamTensor<Real>& ParamStore<Real>::get(std::string_view name) {
  for (auto& t : tensors_)
    if (t.name == name) return t;
  fail(ErrorKind::InvalidConfig, "unknown parameter '" + std::string(name) + "'");
}

template <class Real>
const ParamTensor<Real>& ParamStore<Real>::get(std::string_view name) const {
  const ParamTensor<Real>* t = find(name);
  if (!t) fail(ErrorKind::InvalidConfig, "unknown parameter '" + std::string(name) + "'");
  return *t;
}

template <class Real>
std::size_t ParamStore<Real>::numel() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.numel();
  return n;
}

template <class Real>
void ParamStore<Real>::zero_grad() {
  for (auto& t : tensors_) std::fill(t.grad.begin(), t.grad.end(), Real(0));
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace nomae::nn
