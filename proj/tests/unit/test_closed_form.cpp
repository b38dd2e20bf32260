#include <cmath>

#include "doctest.h"
#include "rfkit/closed_form.hpp"
#include "rfkit/rng.hpp"
#include "rfkit/spline_basis.hpp"

using namespace rfkit;

namespace {

Matrix gaussian(Index r, Index c, std::uint64_t seed) {
  Rng rng(seed, 0);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("STA normalisation") {
  Matrix X(3, 2);
  X << 1, 2, 3, 4, 5, 6;
  Vector y(3);
  y << 1, 0, 3;
  const Vector s = sta(X, y);
  CHECK(s[0] == doctest::Approx((1 + 15) / 4.0));
  CHECK(s[1] == doctest::Approx((2 + 18) / 4.0));
  CHECK(sta(X, y, StaNormalization::kSamples)[0] == doctest::Approx(16 / 3.0));
}

TEST_CASE("wSTA recovers a noise-free filter and matches the normal equations") {
  const Matrix X = gaussian(200, 12, 1);
  const Vector w = gaussian(12, 1, 2).col(0);
  CHECK((wsta(X, X * w) - w).cwiseAbs().maxCoeff() < 1e-10);
  const Vector y = gaussian(200, 1, 3).col(0);
  const Vector ne = (X.transpose() * X).ldlt().solve(X.transpose() * y);
  CHECK((wsta(X, y) - ne).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("least squares is minimum-norm on a rank-deficient system") {
  Matrix A = gaussian(30, 4, 4);
  A.col(3) = A.col(0);
  const Vector y = gaussian(30, 1, 5).col(0);
  const Vector x = least_squares(A, y);
  const Vector ref = A.completeOrthogonalDecomposition().solve(y);
  CHECK((x - ref).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(x[0] == doctest::Approx(x[3]));
}

TEST_CASE("spline wSTA: dense and structured routes agree") {
  Rng rng(6);
  std::vector<double> data(300 * 8);
  for (auto& v : data) v = rng.normal();
  const Tensor stim({300, 8}, data);
  const DesignMatrix X = build_design(stim, 6, 0.033);
  const SplineBasis basis = tensor_basis(std::vector<DimSpec>{{6, 4}, {8, 5}});
  const Vector y = gaussian(300, 1, 7).col(0);
  const SplineEstimate a = spl_wsta(X.materialize(), y, basis.full());
  const SplineEstimate b = spl_wsta(X, y, basis);
  CHECK((a.b - b.b).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((a.w - basis.full() * a.b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("ASD covariance is a valid kernel") {
  const PriorCov p = asd_cov(std::vector<Index>{5, 4}, 0.5, std::vector<double>{1.0, 2.0});
  CHECK(p.C.rows() == 20);
  CHECK((p.C - p.C.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(p.C(0, 0) == doctest::Approx(std::exp(-0.5)));
  // Entries decay with distance along each axis.
  CHECK(p.C(0, 1) > p.C(0, 2));
  CHECK(p.C(0, 4) > p.C(0, 8));
  CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(p.C).eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("ALD covariance is symmetric positive semi-definite") {
  const std::vector<Index> dims{6, 5};
  const std::vector<double> ts{1.0, 1.5}, ns{2.5, 2.0}, tf{1.0, 1.0}, nf{0.5, 0.3};
  const PriorCov p = ald_cov(dims, ts, ns, tf, nf);
  CHECK((p.C - p.C.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(p.C).eigenvalues().minCoeff() > -1e-9);
}

TEST_CASE("real DFT basis is orthonormal") {
  for (Index n : {4, 7, 10}) {
    const Matrix B = real_dft_basis(n);
    CHECK((B * B.transpose() - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("MAP estimate against the explicit posterior mean") {
  const Matrix X = gaussian(40, 6, 8);
  const Vector y = gaussian(40, 1, 9).col(0);
  const PriorCov p = asd_cov(std::vector<Index>{6}, 0.0, std::vector<double>{1.5});
  const double s2 = 0.7;
  const Matrix Creg = p.C + prior_jitter(p.C) * Matrix::Identity(6, 6);
  const Matrix Lambda = (X.transpose() * X / s2 + Creg.inverse()).inverse();
  const Vector mu = Lambda * X.transpose() * y / s2;
  const EvidenceState st = map_estimate(X, y, p.C, s2);
  CHECK((st.mu - mu).cwiseAbs().maxCoeff() < 1e-8);
  // A very broad prior gives back least squares.
  const EvidenceState broad = map_estimate(X, y, 1e8 * Matrix::Identity(6, 6), s2);
  CHECK((broad.mu - wsta(X, y)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("marginal likelihood matches the Gaussian density of y") {
  const Matrix X = gaussian(15, 3, 10);
  const Vector y = gaussian(15, 1, 11).col(0);
  const Matrix C = asd_cov(std::vector<Index>{3}, 0.0, std::vector<double>{1.0}).C;
  const double s2 = 0.5;
  const Matrix Cj = C + prior_jitter(C) * Matrix::Identity(3, 3);
  const Matrix K = X * Cj * X.transpose() + s2 * Matrix::Identity(15, 15);
  const Eigen::LDLT<Matrix> ldlt(K);
  const double logdet = ldlt.vectorD().array().log().sum();
  const double nll = 0.5 * (y.dot(ldlt.solve(y)) + logdet + 15 * std::log(2 * M_PI));
  CHECK(neg_log_evidence(X, y, C, s2, EvidenceForm::kMarginalLikelihood) == doctest::Approx(nll).epsilon(1e-8));
}

TEST_CASE("evidence optimisation improves on its starting point") {
  const Matrix X = gaussian(120, 8, 12);
  Vector w(8);
  for (Index i = 0; i < 8; ++i) w[i] = std::exp(-0.5 * (i - 3.5) * (i - 3.5) / 4.0);
  const Vector y = X * w + 0.3 * gaussian(120, 1, 13).col(0);
  const EvidenceFit f = evidence_optimize(X, y, PriorKind::kASD, {8});
  CHECK(f.evaluations <= 500);
  const PriorCov start = asd_cov(std::vector<Index>{8}, 0.0, std::vector<double>{1.0});
  CHECK(f.cost <= neg_log_evidence(X, y, start.C, 1.0, EvidenceForm::kMarginalLikelihood));
  CHECK((f.state.mu - w).norm() < (wsta(X, y) - w).norm() * 1.05);
}
