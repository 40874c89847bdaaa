// Serial reference kernels against their OpenMP counterparts.
//   ./mgpms_bench --benchmark_filter=Gemm
// Set OMP_NUM_THREADS to vary the parallel side.

#include <benchmark/benchmark.h>

#include <vector>

#include "mgpms/kernels/dense.hpp"
#include "mgpms/rng.hpp"

using namespace mgpms;
using kernels::Trans;

namespace {

std::vector<double> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.normal();
  return v;
}

std::vector<double> spd(std::size_t n) {
  const auto a = random_matrix(n, n, 2);
  std::vector<double> s(n * n);
  kernels::serial::gemm(a, a, s, n, n, n, Trans::No, Trans::Yes, false);
  for (std::size_t i = 0; i < n; ++i) s[i * n + i] += static_cast<double>(n);
  return s;
}

template <auto Gemm>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(a, b, c, n, n, n, Trans::No, Trans::No, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <auto Gemm>
void BM_GemmTransposed(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(a, b, c, n, n, n, Trans::Yes, Trans::No, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <auto Cholesky>
void BM_Cholesky(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = spd(n);
  std::vector<double> l(n * n);
  for (auto _ : state) {
    benchmark::DoNotOptimize(Cholesky(a, l, n));
    benchmark::ClobberMemory();
  }
}

template <auto Solve>
void BM_TriSolve(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> l(n * n);
  kernels::serial::cholesky(spd(n), l, n);
  const auto rhs = random_matrix(n, 64, 3);
  for (auto _ : state) {
    auto b = rhs;
    Solve(l, b, n, 64, Trans::No);
    benchmark::DoNotOptimize(b.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<kernels::serial::gemm>)->Name("Gemm/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Gemm<kernels::parallel::gemm>)->Name("Gemm/parallel")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_GemmTransposed<kernels::serial::gemm>)->Name("GemmTN/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_GemmTransposed<kernels::parallel::gemm>)->Name("GemmTN/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_Cholesky<kernels::serial::cholesky>)->Name("Cholesky/serial")->Arg(68)->Arg(256)->Arg(512);
BENCHMARK(BM_Cholesky<kernels::parallel::cholesky>)->Name("Cholesky/parallel")->Arg(68)->Arg(256)->Arg(512);
BENCHMARK(BM_TriSolve<kernels::serial::tri_solve>)->Name("TriSolve/serial")->Arg(68)->Arg(256);
BENCHMARK(BM_TriSolve<kernels::parallel::tri_solve>)->Name("TriSolve/parallel")->Arg(68)->Arg(256);

BENCHMARK_MAIN();
