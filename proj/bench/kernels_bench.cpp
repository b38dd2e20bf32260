// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include "rfkit/kernels.hpp"
#include "rfkit/rng.hpp"
#include "rfkit/spline_basis.hpp"

namespace {

using namespace rfkit;

RowMatrix random_frames(Index n, Index pixels, std::uint64_t seed) {
  Rng rng(seed, 0);
  RowMatrix f(n, pixels);
  for (Index i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
  return f;
}

Vector random_vector(Index n, std::uint64_t seed) {
  Rng rng(seed, 1);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

// 30 lags x 40 pixels, 20 000 rows: the LG benchmark design at factor ~16.
struct Problem {
  RowMatrix frames = random_frames(20000, 40, 1);
  kernels::LaggedView view{&frames, 30, 0, 20000};
  Vector w = random_vector(30 * 40, 2);
  Vector r = random_vector(20000, 3);
  Matrix st = cr_basis_1d(30, 9);
  Matrix ss = cr_basis_1d(40, 12);
};

const Problem& problem() {
  static const Problem p;
  return p;
}

template <auto Fn>
void bm_apply(benchmark::State& state) {
  const Problem& p = problem();
  for (auto _ : state) benchmark::DoNotOptimize(Fn(p.view, p.w));
}

template <auto Fn>
void bm_apply_t(benchmark::State& state) {
  const Problem& p = problem();
  for (auto _ : state) benchmark::DoNotOptimize(Fn(p.view, p.r));
}

template <auto Fn>
void bm_project(benchmark::State& state) {
  const Problem& p = problem();
  for (auto _ : state) benchmark::DoNotOptimize(Fn(p.view, p.st, p.ss));
}

template <auto Fn>
void bm_build(benchmark::State& state) {
  const Problem& p = problem();
  for (auto _ : state) benchmark::DoNotOptimize(Fn(p.view));
}

template <auto Fn>
void bm_kron(benchmark::State& state) {
  const Matrix a = cr_basis_1d(25, 9), b = kernels::serial::kron(cr_basis_1d(25, 9), cr_basis_1d(25, 9));
  for (auto _ : state) benchmark::DoNotOptimize(Fn(a, b));
}

template <auto Fn>
void bm_centroid(benchmark::State& state) {
  const RowMatrix pts = random_frames(800, 5000, 4);
  const Matrix points = pts.transpose();
  const Matrix centroids = points.leftCols(4);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(points, centroids));
}

}  // namespace

BENCHMARK(bm_apply<kernels::serial::lagged_apply>)->Name("lagged_apply/serial");
BENCHMARK(bm_apply<kernels::omp::lagged_apply>)->Name("lagged_apply/omp");
BENCHMARK(bm_apply_t<kernels::serial::lagged_apply_t>)->Name("lagged_apply_t/serial");
BENCHMARK(bm_apply_t<kernels::omp::lagged_apply_t>)->Name("lagged_apply_t/omp");
BENCHMARK(bm_project<kernels::serial::lagged_project>)->Name("lagged_project/serial");
BENCHMARK(bm_project<kernels::omp::lagged_project>)->Name("lagged_project/omp");
BENCHMARK(bm_build<kernels::serial::build_lagged>)->Name("build_lagged/serial");
BENCHMARK(bm_build<kernels::omp::build_lagged>)->Name("build_lagged/omp");
BENCHMARK(bm_kron<kernels::serial::kron>)->Name("kron/serial");
BENCHMARK(bm_kron<kernels::omp::kron>)->Name("kron/omp");
BENCHMARK(bm_centroid<kernels::serial::nearest_centroid>)->Name("nearest_centroid/serial");
BENCHMARK(bm_centroid<kernels::omp::nearest_centroid>)->Name("nearest_centroid/omp");

BENCHMARK_MAIN();
