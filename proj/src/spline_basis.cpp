#include "rfkit/spline_basis.hpp"

#include <string>

#include "rfkit/error.hpp"

namespace rfkit {

Vector cr_knots(int num_points, int df) {
  if (df < 3) throw InvalidArgument("df must be >= 3 (got " + std::to_string(df) + ")");
  if (df > num_points) {
    throw InvalidArgument("df (" + std::to_string(df) + ") exceeds num_points (" + std::to_string(num_points) + ")");
  }
  return Vector::LinSpaced(df, 0.0, static_cast<double>(num_points - 1));
}

Matrix cr_basis_eval(int num_points, int df, const Vector& points, int derivative) {
  if (derivative < 0 || derivative > 2) throw InvalidArgument("derivative order must be 0, 1 or 2");
  const Vector x = cr_knots(num_points, df);
  const int k = df;
  const Vector h = x.tail(k - 1) - x.head(k - 1);

  // B F_inner = D gives the knot second derivatives of every cardinal column;
  // F has zero rows at the two boundary knots (natural end conditions).
  Matrix D = Matrix::Zero(k - 2, k);
  Matrix B = Matrix::Zero(k - 2, k - 2);
  for (int i = 0; i < k - 2; ++i) {
    D(i, i) = 1.0 / h[i];
    D(i, i + 1) = -1.0 / h[i] - 1.0 / h[i + 1];
    D(i, i + 2) = 1.0 / h[i + 1];
    B(i, i) = (h[i] + h[i + 1]) / 3.0;
    if (i + 1 < k - 2) {
      B(i, i + 1) = h[i + 1] / 6.0;
      B(i + 1, i) = h[i + 1] / 6.0;
    }
  }
  Matrix F = Matrix::Zero(k, k);
  F.middleRows(1, k - 2) = B.ldlt().solve(D);

  Matrix S = Matrix::Zero(points.size(), k);
  for (Index p = 0; p < points.size(); ++p) {
    const double xp = points[p];
    if (xp < x[0] || xp > x[k - 1]) throw InvalidArgument("evaluation point outside the knot range");
    int j = 0;
    while (j < k - 2 && xp > x[j + 1]) ++j;
    const double hj = h[j];
    const double right = x[j + 1] - xp;
    const double left = xp - x[j];
    if (derivative == 0) {
      const double c_minus = (right * right * right / hj - hj * right) / 6.0;
      const double c_plus = (left * left * left / hj - hj * left) / 6.0;
      S.row(p) = c_minus * F.row(j) + c_plus * F.row(j + 1);
      S(p, j) += right / hj;
      S(p, j + 1) += left / hj;
    } else if (derivative == 1) {
      const double c_minus = (hj - 3.0 * right * right / hj) / 6.0;
      const double c_plus = (3.0 * left * left / hj - hj) / 6.0;
      S.row(p) = c_minus * F.row(j) + c_plus * F.row(j + 1);
      S(p, j) -= 1.0 / hj;
      S(p, j + 1) += 1.0 / hj;
    } else {
      S.row(p) = (right / hj) * F.row(j) + (left / hj) * F.row(j + 1);
    }
  }
  return S;
}

Matrix cr_basis_1d(int num_points, int df) {
  return cr_basis_eval(num_points, df, Vector::LinSpaced(num_points, 0.0, static_cast<double>(num_points - 1)));
}

SplineBasis::SplineBasis(std::vector<DimSpec> dims, std::vector<Matrix> per_dim, Matrix full,
                         std::vector<Vector> knots)
    : dims_(std::move(dims)), per_dim_(std::move(per_dim)), full_(std::move(full)), knots_(std::move(knots)) {}

Shape SplineBasis::point_shape() const {
  Shape s;
  for (const auto& d : dims_) s.push_back(static_cast<std::size_t>(d.num_points));
  return s;
}

Shape SplineBasis::coeff_shape() const {
  Shape s;
  for (const auto& d : dims_) s.push_back(static_cast<std::size_t>(d.df));
  return s;
}

Matrix SplineBasis::trailing() const {
  if (per_dim_.size() == 1) return Matrix::Identity(1, 1);
  Matrix out = per_dim_[1];
  for (std::size_t i = 2; i < per_dim_.size(); ++i) out = kron(out, per_dim_[i]);
  return out;
}

SplineBasis tensor_basis(std::span<const DimSpec> dims) {
  if (dims.empty()) throw InvalidArgument("tensor_basis needs at least one dimension");
  if (dims.size() > 3) throw InvalidArgument("tensor_basis supports at most 3 dimensions");
  std::vector<Matrix> per_dim;
  std::vector<Vector> knots;
  for (const auto& d : dims) {
    if (d.df == d.num_points) {
      // A knot on every grid point: the cardinal basis is the identity.
      if (d.num_points < 1) throw InvalidArgument("num_points must be positive");
      per_dim.push_back(Matrix::Identity(d.num_points, d.num_points));
      knots.push_back(Vector::LinSpaced(d.num_points, 0.0, d.num_points - 1.0));
    } else {
      per_dim.push_back(cr_basis_1d(d.num_points, d.df));
      knots.push_back(cr_knots(d.num_points, d.df));
    }
  }
  Matrix full = per_dim[0];
  for (std::size_t i = 1; i < per_dim.size(); ++i) full = kron(full, per_dim[i]);
  return SplineBasis(std::vector<DimSpec>(dims.begin(), dims.end()), std::move(per_dim), std::move(full),
                     std::move(knots));
}

bool is_identity(const SplineBasis& basis) {
  for (const auto& d : basis.dims())
    if (d.df != d.num_points) return false;
  return true;
}

Tensor expand(const SplineBasis& basis, const Vector& b) {
  if (b.size() != basis.num_coeffs()) {
    throw InvalidArgument("coefficient length " + std::to_string(b.size()) + " does not match basis size " +
                          std::to_string(basis.num_coeffs()));
  }
  const Vector w = basis.full() * b;
  return Tensor::from_vector(w, basis.point_shape());
}

}  // namespace rfkit
