#include "rfkit/closed_form.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "rfkit/error.hpp"

namespace rfkit {

namespace {

Matrix gram(const Matrix& A) {
  Matrix G = Matrix::Zero(A.cols(), A.cols());
  G.selfadjointView<Eigen::Lower>().rankUpdate(A.transpose());
  G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
  return G;
}

double sta_denominator(Index rows, const Vector& y, StaNormalization norm) {
  const double n = norm == StaNormalization::kSpikeCount ? y.sum() : static_cast<double>(rows);
  if (!(n > 0.0)) throw DataError("no effective samples");
  return n;
}

}  // namespace

Vector sta(const Matrix& X, const Vector& y, StaNormalization norm) {
  if (X.rows() != y.size()) throw InvalidArgument("rows(X) must equal length(y)");
  return X.transpose() * y / sta_denominator(X.rows(), y, norm);
}

Vector sta(const DesignMatrix& X, const Vector& y, StaNormalization norm) {
  if (X.rows() != y.size()) throw InvalidArgument("rows(X) must equal length(y)");
  return X.apply_t(y) / sta_denominator(X.rows(), y, norm);
}

Vector least_squares(const Matrix& A, const Vector& y) {
  if (A.rows() != y.size()) throw InvalidArgument("rows(A) must equal length(y)");
  const Matrix G = gram(A);
  const Vector rhs = A.transpose() * y;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod;
  // Relative pivot threshold: the Gram matrix squares the condition number of A.
  cod.setThreshold(1e-12);
  cod.compute(G);
  return cod.solve(rhs);
}

Vector wsta(const Matrix& X, const Vector& y) { return least_squares(X, y); }

SplineEstimate spl_wsta(const Matrix& X, const Vector& y, const Matrix& S) {
  if (X.cols() != S.rows()) throw InvalidArgument("cols(X) must equal rows(S)");
  const Matrix XS = X * S;
  SplineEstimate e;
  e.b = least_squares(XS, y);
  e.w = S * e.b;
  return e;
}

SplineEstimate spl_wsta(const DesignMatrix& X, const Vector& y, const SplineBasis& basis) {
  if (X.rows() != y.size()) throw InvalidArgument("rows(X) must equal length(y)");
  const Matrix XS = X.project(basis);
  SplineEstimate e;
  e.b = least_squares(XS, y);
  e.w = basis.full() * e.b;
  return e;
}

PriorCov asd_cov(const std::vector<Vector>& coords, double rho, std::span<const double> delta) {
  if (coords.empty() || coords.size() != delta.size()) throw InvalidArgument("one delta per dimension required");
  PriorCov p;
  p.kind = PriorKind::kASD;
  p.rho = rho;
  Matrix C = Matrix::Ones(1, 1);
  for (std::size_t d = 0; d < coords.size(); ++d) {
    if (!(delta[d] > 0.0)) throw InvalidArgument("ASD smoothness delta must be > 0");
    const Vector& x = coords[d];
    Matrix Cd(x.size(), x.size());
    for (Index i = 0; i < x.size(); ++i)
      for (Index j = 0; j < x.size(); ++j) {
        const double sq = (x[i] - x[j]) * (x[i] - x[j]);
        Cd(i, j) = std::exp(-sq / (2.0 * delta[d] * delta[d]));
      }
    C = kron(C, Cd);
    p.dims.push_back(x.size());
    p.delta.push_back(delta[d]);
  }
  p.C = std::exp(-rho) * C;
  return p;
}

PriorCov asd_cov(const std::vector<Index>& dims, double rho, std::span<const double> delta) {
  std::vector<Vector> coords;
  for (Index n : dims) coords.push_back(Vector::LinSpaced(n, 0.0, static_cast<double>(n - 1)));
  return asd_cov(coords, rho, delta);
}

Matrix real_dft_basis(Index n) {
  Matrix B(n, n);
  const double pi = std::numbers::pi;
  B.row(0).setConstant(1.0 / std::sqrt(static_cast<double>(n)));
  Index row = 1;
  for (Index k = 1; 2 * k < n; ++k) {
    for (Index i = 0; i < n; ++i) {
      const double arg = 2.0 * pi * static_cast<double>(k * i) / static_cast<double>(n);
      B(row, i) = std::sqrt(2.0 / n) * std::cos(arg);
      B(row + 1, i) = std::sqrt(2.0 / n) * std::sin(arg);
    }
    row += 2;
  }
  if (n % 2 == 0 && n > 1) {
    for (Index i = 0; i < n; ++i) B(row, i) = (i % 2 == 0 ? 1.0 : -1.0) / std::sqrt(static_cast<double>(n));
  }
  return B;
}

Vector real_dft_frequencies(Index n) {
  Vector w(n);
  w[0] = 0.0;
  Index row = 1;
  for (Index k = 1; 2 * k < n; ++k) {
    w[row] = w[row + 1] = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    row += 2;
  }
  if (n % 2 == 0 && n > 1) w[row] = std::numbers::pi;
  return w;
}

PriorCov ald_cov(const std::vector<Index>& dims, std::span<const double> tau_s, std::span<const double> nu_s,
                 std::span<const double> tau_f, std::span<const double> nu_f, double rho) {
  const std::size_t nd = dims.size();
  if (nd == 0 || tau_s.size() != nd || nu_s.size() != nd || tau_f.size() != nd || nu_f.size() != nd) {
    throw InvalidArgument("ALD needs tau_s, nu_s, tau_f, nu_f for every dimension");
  }
  PriorCov p;
  p.kind = PriorKind::kALD;
  p.rho = rho;
  p.dims = dims;
  Matrix C = Matrix::Ones(1, 1);
  for (std::size_t d = 0; d < nd; ++d) {
    if (!(tau_s[d] > 0.0)) throw InvalidArgument("ALD tau_s must be > 0");
    if (!std::isfinite(nu_s[d]) || !std::isfinite(tau_f[d]) || !std::isfinite(nu_f[d])) {
      throw InvalidArgument("ALD parameters must be finite");
    }
    const Index n = dims[d];
    Vector cs_sqrt(n);
    for (Index i = 0; i < n; ++i) {
      const double z = (static_cast<double>(i) - nu_s[d]) / tau_s[d];
      cs_sqrt[i] = std::exp(-0.25 * z * z);  // sqrt of exp(-z^2 / 2)
    }
    const Vector omega = real_dft_frequencies(n);
    Vector cf(n);
    for (Index i = 0; i < n; ++i) {
      const double z = std::abs(tau_f[d] * omega[i]) - nu_f[d];
      cf[i] = std::exp(-0.5 * z * z);
    }
    const Matrix B = real_dft_basis(n);
    Matrix inner = B.transpose() * cf.asDiagonal() * B;
    Matrix Cd = cs_sqrt.asDiagonal() * inner * cs_sqrt.asDiagonal();
    Cd = 0.5 * (Cd + Cd.transpose());
    C = kron(C, Cd);
    p.tau_s.push_back(tau_s[d]);
    p.nu_s.push_back(nu_s[d]);
    p.tau_f.push_back(tau_f[d]);
    p.nu_f.push_back(nu_f[d]);
  }
  p.C = std::exp(-rho) * C;
  return p;
}

GaussianStats gaussian_stats(const Matrix& X, const Vector& y) {
  if (X.rows() != y.size()) throw InvalidArgument("rows(X) must equal length(y)");
  return {gram(X), X.transpose() * y, y.squaredNorm(), X.rows()};
}

}  // namespace rfkit
