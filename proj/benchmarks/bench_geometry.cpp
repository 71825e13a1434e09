#include <benchmark/benchmark.h>

#include "tsdet/geometry.hpp"
#include "tsdet/rng.hpp"

namespace {

std::vector<tsdet::Box> random_boxes(int n, std::uint64_t seed) {
  tsdet::Rng rng(seed);
  std::vector<tsdet::Box> out;
  for (int i = 0; i < n; ++i) {
    double w = rng.uniform(5, 40), h = rng.uniform(5, 40);
    double x = rng.uniform(0, 200 - w), y = rng.uniform(0, 200 - h);
    out.push_back({x, y, x + w, y + h});
  }
  return out;
}

void BM_Iou(benchmark::State& state) {
  auto boxes = random_boxes(2, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tsdet::iou(boxes[0], boxes[1]));
  }
}
BENCHMARK(BM_Iou);

void BM_Nms(benchmark::State& state) {
  int n = static_cast<int>(state.range(0));
  auto boxes = random_boxes(n, 2);
  tsdet::Rng rng(3);
  std::vector<double> scores;
  for (int i = 0; i < n; ++i) scores.push_back(rng.uniform());
  for (auto _ : state) {
    benchmark::DoNotOptimize(tsdet::nms(boxes, scores, 0.5));
  }
}
BENCHMARK(BM_Nms)->Arg(50)->Arg(200)->Arg(800);

void BM_EncodeDecode(benchmark::State& state) {
  auto boxes = random_boxes(2, 4);
  for (auto _ : state) {
    auto d = tsdet::encode_box(boxes[0], boxes[1]);
    benchmark::DoNotOptimize(tsdet::decode_box(d, boxes[1]));
  }
}
BENCHMARK(BM_EncodeDecode);

}  // namespace
