#pragma once

#include <memory>
#include <span>
#include <vector>

#include "rfkit/tensor.hpp"
#include "rfkit/types.hpp"

namespace rfkit {

struct DimSpec {
  int num_points = 0;
  int df = 0;

  friend bool operator==(const DimSpec&, const DimSpec&) = default;
};

// Cardinal natural cubic regression spline basis evaluated on the integer grid
// 0..num_points-1 with `df` equally spaced knots spanning the grid (endpoints
// included). Column i interpolates 1 at knot i and 0 at the other knots.
// Requires 3 <= df <= num_points.
Matrix cr_basis_1d(int num_points, int df);

// The same cardinal basis (or its first/second derivative) at arbitrary points
// inside [0, num_points - 1]; one row per point.
Matrix cr_basis_eval(int num_points, int df, const Vector& points, int derivative = 0);

// Knot positions used by cr_basis_1d.
Vector cr_knots(int num_points, int df);

// Tensor-product smooth over up to three axes, ordered time, x, y.
class SplineBasis {
 public:
  SplineBasis(std::vector<DimSpec> dims, std::vector<Matrix> per_dim, Matrix full, std::vector<Vector> knots);

  const std::vector<DimSpec>& dims() const noexcept { return dims_; }
  const std::vector<Matrix>& per_dim() const noexcept { return per_dim_; }
  const Matrix& full() const noexcept { return full_; }
  const std::vector<Vector>& knots() const noexcept { return knots_; }

  Index num_points() const { return full_.rows(); }
  Index num_coeffs() const { return full_.cols(); }
  Shape point_shape() const;
  Shape coeff_shape() const;

  // Kronecker product of every axis after the first (the spatial block).
  Matrix trailing() const;

 private:
  std::vector<DimSpec> dims_;
  std::vector<Matrix> per_dim_;
  Matrix full_;
  std::vector<Vector> knots_;
};

SplineBasis tensor_basis(std::span<const DimSpec> dims);

// Identity "basis" (one coefficient per point): lets the same code path serve
// spline and pixel models.
bool is_identity(const SplineBasis& basis);

// w = S b reshaped to the point grid.
Tensor expand(const SplineBasis& basis, const Vector& b);

}  // namespace rfkit
