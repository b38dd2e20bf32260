// The OpenMP kernels must reproduce the serial references exactly.
#include "doctest.h"
#include "rfkit/design.hpp"
#include "rfkit/kernels.hpp"
#include "rfkit/rng.hpp"
#include "rfkit/spline_basis.hpp"

using namespace rfkit;

namespace {

RowMatrix frames(Index n, Index pixels, std::uint64_t seed) {
  Rng rng(seed, 0);
  RowMatrix f(n, pixels);
  for (Index i = 0; i < f.size(); ++i) f.data()[i] = rng.normal();
  return f;
}

Vector vec(Index n, std::uint64_t seed) {
  Rng rng(seed, 1);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("serial and omp kernels agree bit-for-bit") {
  const RowMatrix f = frames(500, 12, 1);
  for (int threads : {1, 2, 4}) {
    kernels::set_threads(threads);
    for (Index begin : {Index{0}, Index{37}}) {
      const kernels::LaggedView v{&f, 7, begin, 500};
      const Vector w = vec(v.cols(), 2), r = vec(v.rows(), 3);
      CHECK(kernels::serial::build_lagged(v) == kernels::omp::build_lagged(v));
      CHECK(kernels::serial::lagged_apply(v, w) == kernels::omp::lagged_apply(v, w));
      CHECK(kernels::serial::lagged_apply_t(v, r) == kernels::omp::lagged_apply_t(v, r));
      const Matrix st = cr_basis_1d(7, 4), ss = cr_basis_1d(12, 5);
      CHECK(kernels::serial::lagged_project(v, st, ss) == kernels::omp::lagged_project(v, st, ss));
    }
    const Matrix pts = frames(30, 200, 4).transpose();
    const Matrix cen = pts.leftCols(3);
    const auto a = kernels::serial::nearest_centroid(pts, cen), b = kernels::omp::nearest_centroid(pts, cen);
    CHECK(a.label == b.label);
    CHECK(a.dist2 == b.dist2);
  }
  kernels::set_threads(1);
}

TEST_CASE("lagged kernels match the materialised design") {
  const RowMatrix f = frames(60, 5, 5);
  const kernels::LaggedView v{&f, 4, 0, 60};
  const Matrix X = kernels::serial::build_lagged(v);
  // Row t holds frames t-3..t oldest first, zeros before frame 0.
  for (Index t = 0; t < 60; ++t)
    for (Index lag = 0; lag < 4; ++lag)
      for (Index p = 0; p < 5; ++p) {
        const Index frame = t - 3 + lag;
        CHECK(X(t, lag * 5 + p) == (frame < 0 ? 0.0 : f(frame, p)));
      }
  const Vector w = vec(20, 6), r = vec(60, 7);
  CHECK((kernels::serial::lagged_apply(v, w) - X * w).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((kernels::serial::lagged_apply_t(v, r) - X.transpose() * r).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix st = cr_basis_1d(4, 3), ss = cr_basis_1d(5, 4);
  CHECK((kernels::serial::lagged_project(v, st, ss) - X * kron(st, ss)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("nearest centroid picks the minimum distance") {
  Matrix pts(2, 3);
  pts << 0, 10, 4.9,
         0, 0, 0;
  Matrix cen(2, 2);
  cen << 0, 10,
         0, 0;
  const auto a = kernels::serial::nearest_centroid(pts, cen);
  CHECK(a.label == std::vector<Index>{0, 1, 0});
  CHECK(a.dist2[2] == doctest::Approx(4.9 * 4.9));
}
