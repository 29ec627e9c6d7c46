// Serial reference vs OpenMP kernels on representative layer shapes.

#include <benchmark/benchmark.h>

#include <random>

#include "ser/audio_io.h"
#include "ser/dsp.h"
#include "ser/lens.h"
#include "ser/nn/kernels.h"

namespace {

using ser::nn::Tensor;

Tensor<float> random_tensor(std::vector<int> shape, std::uint64_t seed) {
  Tensor<float> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  for (auto& v : t.storage()) v = d(rng);
  return t;
}

// First conv of the desk-scale model: 3x64x64 input, 12 filters of 11x11, stride 4, pad 2.
struct ConvProblem {
  Tensor<float> input = random_tensor({8, 3, 64, 64}, 1);
  Tensor<float> weights = random_tensor({12, 3, 11, 11}, 2);
  Tensor<float> bias = random_tensor({12}, 3);
};

void BM_ConvForwardSerial(benchmark::State& state) {
  ConvProblem p;
  for (auto _ : state)
    benchmark::DoNotOptimize(ser::nn::serial::conv2d_forward(p.input, p.weights, p.bias, 4, 2));
}
void BM_ConvForwardOmp(benchmark::State& state) {
  ConvProblem p;
  for (auto _ : state)
    benchmark::DoNotOptimize(ser::nn::conv2d_forward(p.input, p.weights, p.bias, 4, 2));
}

void BM_ConvBackwardSerial(benchmark::State& state) {
  ConvProblem p;
  const auto out = ser::nn::serial::conv2d_forward(p.input, p.weights, p.bias, 4, 2);
  for (auto _ : state)
    benchmark::DoNotOptimize(ser::nn::serial::conv2d_backward(p.input, p.weights, out, 4, 2));
}
void BM_ConvBackwardOmp(benchmark::State& state) {
  ConvProblem p;
  const auto out = ser::nn::conv2d_forward(p.input, p.weights, p.bias, 4, 2);
  for (auto _ : state)
    benchmark::DoNotOptimize(ser::nn::conv2d_backward(p.input, p.weights, out, 4, 2));
}

ser::AudioClip one_second_clip() {
  return ser::synth_utterance(ser::default_synth_specs()[0], ser::SynthOptions{}, 0, 0);
}

void BM_StftSerial(benchmark::State& state) {
  const auto clip = one_second_clip();
  const ser::StftConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(ser::serial::stft(clip.samples, cfg));
}
void BM_StftOmp(benchmark::State& state) {
  const auto clip = one_second_clip();
  const ser::StftConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(ser::stft(clip.samples, cfg));
}

ser::GrayImage spectrogram() {
  return ser::spectrogram_image(one_second_clip(), ser::StftConfig{});
}

void BM_ResizeSerial(benchmark::State& state) {
  const auto img = spectrogram();
  for (auto _ : state) benchmark::DoNotOptimize(ser::serial::resize_bilinear(img, 256, 256));
}
void BM_ResizeOmp(benchmark::State& state) {
  const auto img = spectrogram();
  for (auto _ : state) benchmark::DoNotOptimize(ser::resize_bilinear(img, 256, 256));
}

void BM_LensSerial(benchmark::State& state) {
  const auto img = ser::resize_bilinear(spectrogram(), 256, 256);
  for (auto _ : state) benchmark::DoNotOptimize(ser::serial::apply_lens(img, 2.0));
}
void BM_LensOmp(benchmark::State& state) {
  const auto img = ser::resize_bilinear(spectrogram(), 256, 256);
  for (auto _ : state) benchmark::DoNotOptimize(ser::apply_lens(img, 2.0));
}

}  // namespace

BENCHMARK(BM_ConvForwardSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForwardOmp)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardOmp)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StftSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_StftOmp)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ResizeSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ResizeOmp)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_LensSerial)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_LensOmp)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
