// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "sfda/eval.hpp"
#include "sfda/teacher.hpp"
#include "sfda/variance.hpp"
#include "sfda/world.hpp"

using namespace sfda;

namespace {

struct Setup {
  WorldConfig world;
  Dataset data;
  ModelParams params;

  explicit Setup(int num_samples) {
    world.num_source = num_samples;
    data = generate_domain(make_source_spec(world), 1);
    Rng rng = make_rng(2, "bench.params");
    params = ModelParams::random(world.num_classes, world.feature_dim, 0.3, rng, 0.3);
  }
};

void BM_Forward(benchmark::State& state) {
  const Setup s(64);
  for (auto _ : state)
    for (const auto& sample : s.data) benchmark::DoNotOptimize(forward(s.params, sample));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.data.size()));
}
BENCHMARK(BM_Forward);

void BM_DetectionLoss(benchmark::State& state) {
  const Setup s(64);
  std::vector<std::vector<LabelTarget>> labels;
  for (const auto& sample : s.data) labels.push_back(to_targets(pseudo_label(s.params, sample, 0.2)));
  for (auto _ : state)
    for (std::size_t i = 0; i < s.data.size(); ++i)
      benchmark::DoNotOptimize(detection_loss(s.params, s.data[i], labels[i], {}, {}));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.data.size()));
}
BENCHMARK(BM_DetectionLoss);

void BM_MapAtIou(benchmark::State& state) {
  const Setup s(static_cast<int>(state.range(0)));
  std::vector<ImageDetections> dets;
  std::vector<ImageTruth> truth;
  for (const auto& sample : s.data) {
    dets.push_back(to_scored(forward(s.params, sample)));
    truth.push_back(to_truth(sample));
  }
  for (auto _ : state) benchmark::DoNotOptimize(map_at_iou(dets, truth, s.world.num_classes));
}
BENCHMARK(BM_MapAtIou)->Arg(100)->Arg(500);

void BM_Partition(benchmark::State& state) {
  const Setup s(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(partition(s.data, s.params, 10, 0.5, 3));
}
BENCHMARK(BM_Partition)->Arg(100);

}  // namespace

BENCHMARK_MAIN();
