// Serial reference kernels against their OpenMP versions at model-sized
// inputs (512 tokens, 12 heads).

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "bugsem/kernels.hpp"

using namespace bugsem;
using namespace bugsem::kernels;

namespace {

constexpr std::size_t kHeads = 12;

std::vector<float> random_floats(std::size_t count) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> v(count);
  for (float& x : v) x = u(rng);
  return v;
}

Matrix random_matrix(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix m(n, n);
  for (double& x : m.data()) x = u(rng);
  return m;
}

// About 1.6 input tokens per group, the typical subword ratio for C code.
std::vector<std::size_t> groups_for(std::size_t n, std::size_t& groups) {
  std::vector<std::size_t> g(n);
  groups = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i == 0 || i + 1 == n) {
      g[i] = kNoGroup;
      continue;
    }
    if (i % 8 != 3 && i % 8 != 6 && i % 8 != 7) ++groups;
    g[i] = groups == 0 ? 0 : groups - 1;
  }
  return g;
}

void BM_HeadAverage(benchmark::State& state, Backend backend) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto layer = random_floats(kHeads * n * n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(head_average(layer, kHeads, n, backend));
  }
}

void BM_Pool(benchmark::State& state, Backend backend) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto m = random_floats(n * n);
  std::size_t groups = 0;
  const auto g = groups_for(n, groups);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        pool(std::span<const float>(m), n, g, groups, Pooling::block_mean, backend));
  }
}

void BM_AddProduct(benchmark::State& state, Backend backend) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, 2);
  const Matrix b = random_matrix(n, 3);
  Matrix c(n, n);
  for (auto _ : state) {
    add_product(a, b, c, backend);
    benchmark::ClobberMemory();
  }
}

}  // namespace

BENCHMARK_CAPTURE(BM_HeadAverage, serial, Backend::serial)->Arg(128)->Arg(512);
BENCHMARK_CAPTURE(BM_HeadAverage, openmp, Backend::openmp)->Arg(128)->Arg(512);
BENCHMARK_CAPTURE(BM_Pool, serial, Backend::serial)->Arg(128)->Arg(512);
BENCHMARK_CAPTURE(BM_Pool, openmp, Backend::openmp)->Arg(128)->Arg(512);
BENCHMARK_CAPTURE(BM_AddProduct, serial, Backend::serial)->Arg(128)->Arg(320);
BENCHMARK_CAPTURE(BM_AddProduct, openmp, Backend::openmp)->Arg(128)->Arg(320);

BENCHMARK_MAIN();
