// Serial reference kernels against the OpenMP ones. Thread count follows
// OMP_NUM_THREADS; compare e.g. OMP_NUM_THREADS=1 and OMP_NUM_THREADS=4.

#include <benchmark/benchmark.h>

#include <random>

#include "fairvoice/kernels/kernels.hpp"
#include "fairvoice/kernels/reference.hpp"
#include "fairvoice/spectro/mel.hpp"

using namespace fairvoice;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (double& v : t.values()) v = u(rng);
  return t;
}

struct ConvCase {
  Tensor x, w, b, grad_out;
  kernels::ConvGeometry g{3, 1, 1};
};

ConvCase conv_case(std::size_t channels, std::size_t size) {
  ConvCase c;
  c.x = random_tensor({4, channels, size, size}, 1);
  c.w = random_tensor({channels, channels, 3, 3}, 2);
  c.b = random_tensor({channels}, 3);
  c.grad_out = random_tensor({4, channels, size, size}, 4);
  return c;
}

void BM_ConvForwardReference(benchmark::State& state) {
  const ConvCase c = conv_case(state.range(0), 28);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::reference::conv2d_forward(c.x, c.w, c.b, c.g));
}
void BM_ConvForwardParallel(benchmark::State& state) {
  const ConvCase c = conv_case(state.range(0), 28);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv2d_forward(c.x, c.w, c.b, c.g));
}
BENCHMARK(BM_ConvForwardReference)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForwardParallel)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_ConvBackwardReference(benchmark::State& state) {
  const ConvCase c = conv_case(state.range(0), 28);
  for (auto _ : state) {
    Tensor gw(c.w.shape()), gb(c.b.shape()), gx(c.x.shape());
    kernels::reference::conv2d_backward(c.x, c.w, c.grad_out, c.g, gw, gb, &gx);
    benchmark::DoNotOptimize(gx);
  }
}
void BM_ConvBackwardParallel(benchmark::State& state) {
  const ConvCase c = conv_case(state.range(0), 28);
  for (auto _ : state) {
    Tensor gw(c.w.shape()), gb(c.b.shape()), gx(c.x.shape());
    kernels::conv2d_backward(c.x, c.w, c.grad_out, c.g, gw, gb, &gx);
    benchmark::DoNotOptimize(gx);
  }
}
BENCHMARK(BM_ConvBackwardReference)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardParallel)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_MaxPoolReference(benchmark::State& state) {
  const Tensor x = random_tensor({8, 64, 112, 112}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::reference::max_pool2d_forward(x, {3, 2, 1}));
}
void BM_MaxPoolParallel(benchmark::State& state) {
  const Tensor x = random_tensor({8, 64, 112, 112}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::max_pool2d_forward(x, {3, 2, 1}, nullptr));
}
BENCHMARK(BM_MaxPoolReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaxPoolParallel)->Unit(benchmark::kMillisecond);

void BM_BilinearReference(benchmark::State& state) {
  Grid g(128, 313);
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = static_cast<double>(i % 97) / 97.0;
  for (auto _ : state) benchmark::DoNotOptimize(kernels::reference::bilinear_resize(g, 224, 224));
}
void BM_BilinearParallel(benchmark::State& state) {
  Grid g(128, 313);
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = static_cast<double>(i % 97) / 97.0;
  for (auto _ : state) benchmark::DoNotOptimize(kernels::bilinear_resize(g, 224, 224));
}
BENCHMARK(BM_BilinearReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BilinearParallel)->Unit(benchmark::kMillisecond);

spectro::Waveform tone(double seconds) {
  spectro::Waveform w;
  w.sample_rate = 16000;
  w.samples.resize(static_cast<std::size_t>(seconds * w.sample_rate));
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  for (std::size_t i = 0; i < w.samples.size(); ++i) w.samples[i] = 0.5 * std::sin(0.05 * i) + u(rng);
  return w;
}

// The direct DFT is O(N^2) per frame, so a short clip and a small window.
void BM_StftReference(benchmark::State& state) {
  spectro::MelParams p;
  p.fft_window = 256;
  p.duration = 1.0;
  const auto w = tone(1.0);
  for (auto _ : state) benchmark::DoNotOptimize(spectro::reference::stft_magnitude(w, p));
}
void BM_StftFftw(benchmark::State& state) {
  spectro::MelParams p;
  p.fft_window = 256;
  p.duration = 1.0;
  const auto w = tone(1.0);
  for (auto _ : state) benchmark::DoNotOptimize(spectro::stft_magnitude(w, p));
}
BENCHMARK(BM_StftReference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StftFftw)->Unit(benchmark::kMillisecond);

void BM_ToMel(benchmark::State& state) {
  const auto w = tone(10.0);
  for (auto _ : state) benchmark::DoNotOptimize(spectro::to_mel(w));
}
BENCHMARK(BM_ToMel)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
