#include "tsdet/nn/tensor.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace tsdet::nn {

std::int64_t numel_of(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::int64_t> s)
    : shape(std::move(s)), data(static_cast<std::size_t>(numel_of(shape)), 0.0) {}

Tensor::Tensor(std::vector<std::int64_t> s, Scalar fill)
    : shape(std::move(s)), data(static_cast<std::size_t>(numel_of(shape)), fill) {}

Tensor::Tensor(std::vector<std::int64_t> s, std::vector<Scalar> d)
    : shape(std::move(s)), data(std::move(d)) {
  if (numel_of(shape) != static_cast<std::int64_t>(data.size())) {
    throw std::invalid_argument("tensor shape/data size mismatch");
  }
}

void Tensor::add_(const Tensor& other) {
  assert(same_shape(other));
  for (std::size_t i = 0; i < data.size(); ++i) data[i] += other.data[i];
}

void Tensor::scale_(Scalar s) {
  for (auto& v : data) v *= s;
}

Scalar Tensor::max_abs() const {
  Scalar m = 0.0;
  for (auto v : data) m = std::max(m, std::abs(v));
  return m;
}

bool Tensor::all_finite() const {
  for (auto v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor softmax_rows(const Tensor& logits) {
  if (logits.ndim() != 2) throw std::invalid_argument("softmax_rows expects [N,K]");
  std::int64_t n = logits.dim(0), k = logits.dim(1);
  Tensor out(logits.shape);
  for (std::int64_t i = 0; i < n; ++i) {
    const Scalar* row = logits.data.data() + i * k;
    Scalar* orow = out.data.data() + i * k;
    Scalar m = row[0];
    for (std::int64_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    Scalar sum = 0.0;
    for (std::int64_t j = 0; j < k; ++j) {
      orow[j] = std::exp(row[j] - m);
      sum += orow[j];
    }
    for (std::int64_t j = 0; j < k; ++j) orow[j] /= sum;
  }
  return out;
}

}  // namespace tsdet::nn
