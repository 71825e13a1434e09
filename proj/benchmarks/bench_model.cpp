#include <benchmark/benchmark.h>

#include "tsdet/model/detector.hpp"
#include "tsdet/synthdata.hpp"
#include "tsdet/training.hpp"

namespace {

using namespace tsdet;

SynthConfig bench_synth() {
  SynthConfig sc;
  sc.n_images = 4;
  sc.image_size = 64;
  sc.seed = 1;
  sc.attribute_label_rate = 1.0;
  return sc;
}

void BM_Predict(benchmark::State& state) {
  Dataset ds = generate(bench_synth());
  ModelConfig mc;
  mc.variant = ModelVariant::TwoStream;
  DetectionModel model = DetectionModel::build(mc, ds.vocabulary, 1);
  const ImageU8& img = *ds.samples[0].pixels;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.predict(img));
  }
}
BENCHMARK(BM_Predict)->Unit(benchmark::kMillisecond);

void BM_TrainStepImage(benchmark::State& state) {
  Dataset ds = generate(bench_synth());
  ModelConfig mc;
  mc.variant = state.range(0) == 0 ? ModelVariant::SingleStream : ModelVariant::TwoStream;
  DetectionModel model = DetectionModel::build(mc, ds.vocabulary, 1);
  TrainConfig tc;
  Rng rng(3);
  const ImageU8& img = *ds.samples[0].pixels;
  for (auto _ : state) {
    ImageLosses losses = forward_losses(model, img, ds.samples[0].annotations, tc, rng);
    auto grads = nn::backward(losses.total);
    benchmark::DoNotOptimize(grads.empty());
  }
}
BENCHMARK(BM_TrainStepImage)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
