#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "rfkit/rng.hpp"
#include "rfkit/spline_basis.hpp"
#include "rfkit/subunits.hpp"

using namespace rfkit;

namespace {

SpikeTriggeredEnsemble clusters(std::uint64_t seed, Index per, Matrix* centres = nullptr) {
  Rng rng(seed);
  const Index d = 16;
  Matrix C(d, 2);
  for (Index i = 0; i < d; ++i) {
    C(i, 0) = std::exp(-0.5 * (i - 4.0) * (i - 4.0) / 2.0);
    C(i, 1) = -std::exp(-0.5 * (i - 11.0) * (i - 11.0) / 2.0);
  }
  SpikeTriggeredEnsemble e;
  e.V = Matrix(2 * per, d);
  for (Index r = 0; r < 2 * per; ++r)
    for (Index i = 0; i < d; ++i) e.V(r, i) = 3.0 * C(i, r % 2) + 0.2 * rng.normal();
  if (centres) *centres = C;
  return e;
}

}  // namespace

TEST_CASE("spike-triggered ensemble repeats rows by spike count") {
  Matrix X(3, 2);
  X << 1, 2, 3, 4, 5, 6;
  Vector y(3);
  y << 2, 0, 1;
  const SpikeTriggeredEnsemble e = ste(X, y);
  REQUIRE(e.V.rows() == 3);
  CHECK(e.V.row(0) == X.row(0));
  CHECK(e.V.row(1) == X.row(0));
  CHECK(e.V.row(2) == X.row(2));
}

TEST_CASE("k-means recovers separated clusters and never increases its objective") {
  Matrix C;
  const SpikeTriggeredEnsemble e = clusters(1, 100, &C);
  for (bool spline : {false, true}) {
    std::optional<Matrix> S;
    if (spline) S = cr_basis_1d(16, 8);
    const FactorizationResult r = kmeans_subunits(e, 2, S, 3);
    for (std::size_t i = 1; i < r.objective_history.size(); ++i)
      CHECK(r.objective_history[i] <= r.objective_history[i - 1] * (1 + 1e-12));
    const SubunitMatch m = match_subunits(r.W, C);
    CHECK(m.mean_normalized_mse() < 0.01);
    if (spline) CHECK(r.B.has_value());
  }
}

TEST_CASE("semi-NMF keeps H nonnegative and decreases its objective") {
  const SpikeTriggeredEnsemble e = clusters(2, 80);
  for (bool spline : {false, true}) {
    std::optional<Matrix> S;
    if (spline) S = cr_basis_1d(16, 6);
    SemiNmfOptions o;
    o.tol = 0;
    o.max_iters = 100;
    const FactorizationResult r = seminmf_subunits(e, 3, S, 4, o);
    CHECK(r.H.minCoeff() >= 0.0);
    for (std::size_t i = 1; i < r.objective_history.size(); ++i)
      CHECK(r.objective_history[i] <= r.objective_history[i - 1] * (1 + 1e-9));
    // Objective is ||V^T - W H^T||_F^2.
    const double obj = (e.V.transpose() - r.W * r.H.transpose()).squaredNorm();
    CHECK(r.objective_history.back() == doctest::Approx(obj).epsilon(1e-6));
  }
}

TEST_CASE("subunit matching handles permutation, sign and scale") {
  Rng rng(5);
  Matrix truth(10, 3);
  for (Index i = 0; i < truth.size(); ++i) truth.data()[i] = rng.normal();
  Matrix est(10, 3);
  est.col(0) = -2.0 * truth.col(2);
  est.col(1) = 0.5 * truth.col(0);
  est.col(2) = truth.col(1);
  const SubunitMatch m = match_subunits(est, truth);
  CHECK(m.assignment == std::vector<int>{1, 2, 0});
  CHECK(m.scale[2] == doctest::Approx(-2.0));
  CHECK(m.mean_normalized_mse() < 1e-20);
}
