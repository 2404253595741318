#include <benchmark/benchmark.h>

#include "disentangle/data.hpp"
#include "disentangle/trainer.hpp"

namespace {

using namespace disentangle;

// arg: image size
void BM_MainStep(benchmark::State& state) {
  SynthConfig sc;
  sc.image_size = static_cast<std::size_t>(state.range(0));
  sc.train = SynthConfig::seen_counts(20);
  sc.val = sc.test = sc.unseen = ComboCounts{};
  const auto splits = generate_synthetic(sc);
  ModelConfig mc;
  mc.image_size = sc.image_size;
  DisentangleModel model(mc);
  model.init_params(1);
  Trainer trainer(model, TrainConfig{});
  std::vector<std::size_t> idx(50);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Batch batch = make_batch(splits.train, idx);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.main_step(batch));
}
BENCHMARK(BM_MainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_AdversaryStep(benchmark::State& state) {
  SynthConfig sc;
  sc.image_size = static_cast<std::size_t>(state.range(0));
  sc.train = SynthConfig::seen_counts(20);
  sc.val = sc.test = sc.unseen = ComboCounts{};
  const auto splits = generate_synthetic(sc);
  ModelConfig mc;
  mc.image_size = sc.image_size;
  DisentangleModel model(mc);
  model.init_params(1);
  Trainer trainer(model, TrainConfig{});
  std::vector<std::size_t> idx(50);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Batch batch = make_batch(splits.train, idx);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.adversary_step(batch));
}
BENCHMARK(BM_AdversaryStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
