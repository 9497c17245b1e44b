#include <benchmark/benchmark.h>

#include <random>

#include "ptd/metrics.hpp"
#include "ptd/mock_backend.hpp"
#include "ptd/prompt_grammar.hpp"
#include "ptd/refinement.hpp"
#include "ptd/spectrum.hpp"

using namespace ptd;

namespace {

GrayImage noise_image(int side, unsigned seed) {
  return to_gray(mock_texture("bench noise " + std::to_string(seed), seed, side, side));
}

void BM_RadialSpectrum(benchmark::State& state) {
  const auto img = noise_image(static_cast<int>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(frequency_cutoff(radial_power_spectrum(img)));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_RadialSpectrum)->Arg(128)->Arg(512);

void BM_PatchVariance(benchmark::State& state) {
  const auto img = noise_image(512, 2);
  for (auto _ : state) benchmark::DoNotOptimize(patch_variance(img, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_PatchVariance)->Arg(32)->Arg(50);

void BM_MeanSpectrum(benchmark::State& state) {
  std::vector<GrayImage> images;
  for (unsigned i = 0; i < 16; ++i) images.push_back(noise_image(256, i));
  for (auto _ : state) benchmark::DoNotOptimize(mean_power_spectrum(images).images);
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_MeanSpectrum);

void BM_Fid(benchmark::State& state) {
  const auto dim = state.range(0);
  std::mt19937 rng(3);
  std::normal_distribution<double> n;
  Eigen::MatrixXd a(2 * dim, dim), b(2 * dim, dim);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = n(rng);
    b.data()[i] = n(rng) + 0.1;
  }
  const auto sa = feature_stats(a), sb = feature_stats(b);
  for (auto _ : state) benchmark::DoNotOptimize(fid(sa, sb));
}
BENCHMARK(BM_Fid)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_EnumeratePrompts(benchmark::State& state) {
  const auto table = DescriptorTable::defaults();
  for (auto _ : state) benchmark::DoNotOptimize(enumerate_prompts(table).size());
}
BENCHMARK(BM_EnumeratePrompts)->Unit(benchmark::kMillisecond);

void BM_QuantileCut(benchmark::State& state) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u;
  std::vector<ImageRecord> base(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < base.size(); ++i) {
    base[i].image_id = i;
    base[i].texture_class = "class" + std::to_string(i % 56);
    base[i].stage_scores.f_c = std::floor(u(rng) * 20);
  }
  for (auto _ : state) {
    auto records = base;
    benchmark::DoNotOptimize(quantile_cut(records, Stage::Freq, 0.8).total_kept());
  }
}
BENCHMARK(BM_QuantileCut)->Arg(10'000)->Arg(100'000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
