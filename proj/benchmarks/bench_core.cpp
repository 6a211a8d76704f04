#include <benchmark/benchmark.h>

#include "maf/adversarial.hpp"
#include "maf/dataset.hpp"
#include "maf/ops.hpp"
#include "maf/rng.hpp"
#include "maf/train.hpp"

using namespace maf;

namespace {

Tensor rand_tensor(const Shape& s, uint64_t seed) {
  Rng rng(seed);
  Tensor t = Tensor::zeros(s);
  for (auto& v : t.values) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  pin_blas_single_thread();
  Tensor x = rand_tensor({8, 96, 96}, 1);
  Tensor k = rand_tensor({8, 8, 3, 3}, 2);
  Tensor b = rand_tensor({8}, 3);
  for (auto _ : state) {
    Tape t;
    benchmark::DoNotOptimize(conv2d(t, x, k, b, 1, 1));
  }
}
BENCHMARK(BM_Conv2dForward);

void BM_BackboneForward(benchmark::State& state) {
  pin_blas_single_thread();
  MafModel model = MafModel::make({}, {}, 7);
  Tensor img = rand_tensor({3, 96, 96}, 4);
  for (auto _ : state) {
    Tape t;
    benchmark::DoNotOptimize(backbone_forward(t, img, model.backbone));
  }
}
BENCHMARK(BM_BackboneForward);

void BM_SrmRearrange(benchmark::State& state) {
  Tensor x = rand_tensor({32, 24, 24}, 5);
  for (auto _ : state) {
    Tape t;
    benchmark::DoNotOptimize(srm_rearrange(t, x, 2));
  }
}
BENCHMARK(BM_SrmRearrange);

void BM_Nms108(benchmark::State& state) {
  Rng rng(6);
  std::vector<BBox> boxes;
  std::vector<double> scores;
  for (int i = 0; i < 108; ++i) {
    const double x1 = rng.uniform(0, 80), y1 = rng.uniform(0, 80);
    boxes.push_back({x1, y1, x1 + rng.uniform(8, 16), y1 + rng.uniform(8, 16)});
    scores.push_back(rng.uniform());
  }
  for (auto _ : state) benchmark::DoNotOptimize(nms(boxes, scores, 0.7));
}
BENCHMARK(BM_Nms108);

void BM_TrainStepFull(benchmark::State& state) {
  pin_blas_single_thread();
  SceneSpec spec;
  spec.seed = 11;
  Scene s1 = generate_scene(spec, 1, 0);
  Scene s2 = generate_scene(spec, 2, 0);
  DomainSample src{"s", kDomainSource, s1.image, s1.ann};
  DomainSample tgt{"t", kDomainTarget, apply_domain_shift(s2.image, {}, 3), {}};
  MafModel model = MafModel::make({}, {}, 13);
  SgdState sgd = SgdState::for_model(model);
  RunConfig cfg;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_step(model, sgd, src, tgt, cfg, 1e-3));
  }
}
BENCHMARK(BM_TrainStepFull);

void BM_SceneGeneration(benchmark::State& state) {
  SceneSpec spec;
  spec.seed = 17;
  int index = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_scene(spec, 9, index++));
  }
}
BENCHMARK(BM_SceneGeneration);

}  // namespace

BENCHMARK_MAIN();
