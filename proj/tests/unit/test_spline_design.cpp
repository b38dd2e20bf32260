#include <cmath>

#include "doctest.h"
#include "rfkit/design.hpp"
#include "rfkit/error.hpp"
#include "rfkit/rng.hpp"
#include "rfkit/spline_basis.hpp"

using namespace rfkit;

TEST_CASE("cardinal basis reproduces constants and linear functions") {
  for (int n : {10, 25, 40})
    for (int df = 3; df <= std::min(n, 12); ++df) {
      const Matrix S = cr_basis_1d(n, df);
      const Vector knots = cr_knots(n, df);
      CHECK(knots[0] == 0.0);
      CHECK(knots[df - 1] == doctest::Approx(n - 1));
      CHECK((S.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
      const Vector grid = Vector::LinSpaced(n, 0, n - 1);
      CHECK((S * knots - grid).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("basis derivatives agree with finite differences") {
  const int n = 20, df = 6;
  Vector pts(5);
  pts << 0.5, 3.2, 7.7, 12.0, 18.3;
  const double h = 1e-5;
  const Matrix d1 = cr_basis_eval(n, df, pts, 1), d2 = cr_basis_eval(n, df, pts, 2);
  const Matrix fp = cr_basis_eval(n, df, (pts.array() + h).matrix());
  const Matrix fm = cr_basis_eval(n, df, (pts.array() - h).matrix());
  const Matrix f0 = cr_basis_eval(n, df, pts);
  CHECK(((fp - fm) / (2 * h) - d1).cwiseAbs().maxCoeff() < 1e-7);
  CHECK(((fp - 2 * f0 + fm) / (h * h) - d2).cwiseAbs().maxCoeff() < 1e-3);
  Vector outside(1);
  outside << n;
  CHECK_THROWS_AS(cr_basis_eval(n, df, outside), InvalidArgument);
}

TEST_CASE("basis argument validation") {
  CHECK_THROWS_AS(cr_basis_1d(10, 2), InvalidArgument);
  CHECK_THROWS_AS(cr_basis_1d(10, 11), InvalidArgument);
  CHECK(cr_basis_1d(10, 10).isApprox(Matrix::Identity(10, 10), 1e-12));
}

TEST_CASE("tensor basis is the Kronecker product of the axes") {
  const std::vector<DimSpec> dims{{8, 4}, {6, 3}, {5, 3}};
  const SplineBasis b = tensor_basis(dims);
  CHECK(b.num_points() == 240);
  CHECK(b.num_coeffs() == 36);
  const Matrix expect = kron(kron(cr_basis_1d(8, 4), cr_basis_1d(6, 3)), cr_basis_1d(5, 3));
  CHECK((b.full() - expect).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((b.trailing() - kron(cr_basis_1d(6, 3), cr_basis_1d(5, 3))).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(b.point_shape() == Shape{8, 6, 5});
  const Tensor w = expand(b, Vector::Ones(36));
  CHECK((w.flat().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("design matrix windows and projection") {
  Rng rng(3);
  std::vector<double> data(50 * 4 * 3);
  for (auto& v : data) v = rng.normal();
  const Tensor stim({50, 4, 3}, data);
  const DesignMatrix X = build_design(stim, 5, 0.033);
  CHECK(X.rows() == 50);
  CHECK(X.cols() == 60);
  CHECK(X.strf_shape() == Shape{5, 4, 3});
  const Matrix M = X.materialize();
  CHECK(M.row(0).head(48).isZero());
  CHECK(M(49, 59) == stim.at({49, 3, 2}));

  const DesignMatrix sub = X.rows_slice(10, 20);
  CHECK(sub.rows() == 10);
  CHECK(sub.materialize() == M.middleRows(10, 10));

  const SplineBasis b = tensor_basis(std::vector<DimSpec>{{5, 3}, {4, 3}, {3, 3}});
  CHECK((X.project(b) - M * b.full()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("centering and splitting") {
  const Tensor stim({4, 2}, {1, 10, 3, 20, 5, 30, 100, 100});
  const Tensor c = center_stimulus(stim, 0, 3);
  CHECK(c.at({0, 0}) == doctest::Approx(-2));
  CHECK(c.at({2, 1}) == doctest::Approx(10));
  CHECK(c.at({3, 0}) == doctest::Approx(97));

  const DataSplit s = split(100, 60, 20, 2, 10);
  CHECK(s.train == IndexRange{0, 60});
  CHECK(s.validation == IndexRange{60, 80});
  CHECK(s.test.size() == 2);
  CHECK(s.test[1] == IndexRange{90, 100});
  CHECK_THROWS_AS(split(100, 90, 20, 0, 0), DataError);
  CHECK(frames_for(60.0, 0.033) == 1818);
}
