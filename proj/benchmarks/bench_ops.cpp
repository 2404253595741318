#include <benchmark/benchmark.h>

#include <random>

#include "disentangle/ops.hpp"

namespace {

using disentangle::Tape;
using disentangle::Tensor;
namespace ops = disentangle::ops;

Tensor random_tensor(disentangle::Shape shape, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(disentangle::shape_numel(shape));
  for (double& x : v) x = n(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// args: batch, channels in, channels out, spatial size
void BM_Conv2dForward(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0)), c = static_cast<std::size_t>(state.range(1)),
             f = static_cast<std::size_t>(state.range(2)), s = static_cast<std::size_t>(state.range(3));
  const Tensor x = random_tensor({b, c, s, s}, 1);
  const Tensor k = random_tensor({f, c, 3, 3}, 2);
  for (auto _ : state) {
    Tape tape = Tape::inference();
    benchmark::DoNotOptimize(ops::conv2d(tape, x, k, 1, ops::Padding::kSame));
  }
  state.counters["MAC/s"] = benchmark::Counter(static_cast<double>(b * c * f * s * s * 9) * static_cast<double>(state.iterations()),
                                               benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Conv2dForward)->Args({50, 16, 16, 32})->Args({50, 32, 32, 16})->Args({50, 128, 128, 4})->Unit(benchmark::kMillisecond);

void BM_Conv2dBackward(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0)), c = static_cast<std::size_t>(state.range(1)),
             f = static_cast<std::size_t>(state.range(2)), s = static_cast<std::size_t>(state.range(3));
  Tensor x = random_tensor({b, c, s, s}, 1, true);
  Tensor k = random_tensor({f, c, 3, 3}, 2, true);
  for (auto _ : state) {
    Tape tape;
    const Tensor y = ops::conv2d(tape, x, k, 1, ops::Padding::kSame);
    tape.backward(ops::sum(tape, y));
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({50, 16, 16, 32})->Unit(benchmark::kMillisecond);

void BM_Dense(benchmark::State& state) {
  const Tensor x = random_tensor({50, 128}, 1);
  const Tensor w = random_tensor({128, 256}, 2);
  const Tensor b = random_tensor({256}, 3);
  for (auto _ : state) {
    Tape tape = Tape::inference();
    benchmark::DoNotOptimize(ops::dense(tape, x, w, b));
  }
}
BENCHMARK(BM_Dense);

}  // namespace
BENCHMARK_MAIN();
