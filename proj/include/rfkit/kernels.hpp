#pragma once

// Data-parallel inner loops. Every kernel has a plain serial reference in
// `kernels::serial` and an OpenMP version in `kernels::omp`; the two must agree
// bit-for-bit (each output element is reduced in the same order by exactly one
// thread), which the unit tests check. Library code calls the omp versions.

#include <vector>

#include "rfkit/types.hpp"

namespace rfkit::kernels {

// Rows [begin, end) of the time-lagged design matrix implied by `frames`
// (n_frames x pixels, row-major). Row t concatenates frames t-n_lags+1 .. t,
// oldest first; frames before index 0 are zeros.
struct LaggedView {
  const RowMatrix* frames = nullptr;
  Index n_lags = 1;
  Index begin = 0;
  Index end = 0;

  Index rows() const { return end - begin; }
  Index pixels() const { return frames->cols(); }
  Index cols() const { return n_lags * frames->cols(); }
};

struct Assignment {
  std::vector<Index> label;
  Vector dist2;
};

namespace serial {

Matrix kron(const Matrix& a, const Matrix& b);
Matrix build_lagged(const LaggedView& x);
Vector lagged_apply(const LaggedView& x, const Vector& w);
Vector lagged_apply_t(const LaggedView& x, const Vector& r);
// X * (s_time kron s_space) without materialising X or the Kronecker product.
Matrix lagged_project(const LaggedView& x, const Matrix& s_time, const Matrix& s_space);
// points: one observation per column (d x n); centroids: d x k.
Assignment nearest_centroid(const Matrix& points, const Matrix& centroids);

}  // namespace serial

namespace omp {

Matrix kron(const Matrix& a, const Matrix& b);
Matrix build_lagged(const LaggedView& x);
Vector lagged_apply(const LaggedView& x, const Vector& w);
Vector lagged_apply_t(const LaggedView& x, const Vector& r);
Matrix lagged_project(const LaggedView& x, const Matrix& s_time, const Matrix& s_space);
Assignment nearest_centroid(const Matrix& points, const Matrix& centroids);

}  // namespace omp

// Worker count used by the omp kernels (RFKIT_THREADS caps it in the CLI).
void set_threads(int n);
int threads();

}  // namespace rfkit::kernels
