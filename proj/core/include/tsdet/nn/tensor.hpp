#pragma once

#include <cstdint>
#include <vector>

namespace tsdet::nn {

// All learnable state and activations are double precision: the loss and
// gradient contracts in the test suites are tight enough (1e-6 absolute,
// 1e-4 relative against finite differences) that single precision would not
// hold them reliably.
using Scalar = double;

struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<Scalar> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s);
  Tensor(std::vector<std::int64_t> s, Scalar fill);
  Tensor(std::vector<std::int64_t> s, std::vector<Scalar> d);

  static Tensor scalar(Scalar v) { return Tensor({1}, std::vector<Scalar>{v}); }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  Scalar& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  Scalar operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

  Scalar item() const { return data.at(0); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  void add_(const Tensor& other);   // elementwise +=
  void scale_(Scalar s);
  Scalar max_abs() const;
  bool all_finite() const;
};

std::int64_t numel_of(const std::vector<std::int64_t>& shape);

// Row-wise softmax of a [N, K] tensor (value-only helper for inference).
Tensor softmax_rows(const Tensor& logits);

}  // namespace tsdet::nn
