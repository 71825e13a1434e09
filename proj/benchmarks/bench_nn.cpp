#include <benchmark/benchmark.h>

#include "tsdet/nn/ops.hpp"
#include "tsdet/rng.hpp"

namespace {

using tsdet::nn::Tensor;
using tsdet::nn::Var;

Tensor random_tensor(std::vector<std::int64_t> shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  tsdet::Rng rng(seed);
  for (auto& v : t.data) v = rng.normal(0, 1);
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  tsdet::nn::NoGradGuard no_grad;
  Tensor x = random_tensor({16, 64, 64}, 1);
  Tensor w = random_tensor({32, 16, 3, 3}, 2);
  Tensor b = random_tensor({32}, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tsdet::nn::conv2d(tsdet::nn::constant(x), tsdet::nn::constant(w),
                                               tsdet::nn::constant(b), 2, 1));
  }
}
BENCHMARK(BM_Conv2dForward);

void BM_Conv2dForwardBackward(benchmark::State& state) {
  Tensor x = random_tensor({16, 64, 64}, 1);
  Tensor w = random_tensor({32, 16, 3, 3}, 2);
  Tensor b = random_tensor({32}, 3);
  Tensor weights = random_tensor({32, 32, 32}, 4);
  for (auto _ : state) {
    Var wl = tsdet::nn::leaf(w);
    Var y = tsdet::nn::conv2d(tsdet::nn::leaf(x), wl, tsdet::nn::leaf(b), 2, 1);
    auto grads = tsdet::nn::backward(tsdet::nn::weighted_sum(y, weights));
    benchmark::DoNotOptimize(grads.find(wl.get()));
  }
}
BENCHMARK(BM_Conv2dForwardBackward);

void BM_RoiAlign(benchmark::State& state) {
  tsdet::nn::NoGradGuard no_grad;
  Tensor feat = random_tensor({32, 16, 16}, 5);
  std::vector<tsdet::Box> rois;
  tsdet::Rng rng(6);
  for (int i = 0; i < 64; ++i) {
    double w = rng.uniform(8, 40), h = rng.uniform(8, 40);
    double x = rng.uniform(0, 64 - w), y = rng.uniform(0, 64 - h);
    rois.push_back({x, y, x + w, y + h});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(tsdet::nn::roi_align(tsdet::nn::constant(feat), rois, 0.25, 7, 2));
  }
}
BENCHMARK(BM_RoiAlign);

void BM_GroupNorm(benchmark::State& state) {
  tsdet::nn::NoGradGuard no_grad;
  Tensor x = random_tensor({32, 32, 32}, 7);
  Tensor gamma = random_tensor({32}, 8);
  Tensor beta = random_tensor({32}, 9);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tsdet::nn::group_norm(tsdet::nn::constant(x), tsdet::nn::constant(gamma),
                                                   tsdet::nn::constant(beta), 8));
  }
}
BENCHMARK(BM_GroupNorm);

}  // namespace
