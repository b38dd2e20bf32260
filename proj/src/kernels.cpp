#include "rfkit/kernels.hpp"

#include <limits>

#include <omp.h>

#include "rfkit/error.hpp"

namespace rfkit::kernels {

namespace {

void check_view(const LaggedView& x) {
  if (x.frames == nullptr) throw InvalidArgument("lagged view has no frames");
  if (x.n_lags < 1) throw InvalidArgument("n_lags must be >= 1");
  if (x.begin < 0 || x.end > x.frames->rows() || x.begin > x.end) {
    throw InvalidArgument("lagged view rows out of range");
  }
}

// Frame index feeding lag slot j of design row t (may be negative = padding).
inline Index source_frame(const LaggedView& x, Index t, Index j) { return t - x.n_lags + 1 + j; }

// Spatially projected frames covering every row of the view; row 0 holds frame
// `first`, where first = max(0, begin - n_lags + 1).
Matrix project_frames(const LaggedView& x, const Matrix& s_space, Index& first) {
  first = std::max<Index>(0, x.begin - x.n_lags + 1);
  const Index count = x.end - first;
  Matrix out(count, s_space.cols());
  if (count > 0) out.noalias() = x.frames->middleRows(first, count) * s_space;
  return out;
}

void check_project(const LaggedView& x, const Matrix& s_time, const Matrix& s_space) {
  check_view(x);
  if (s_time.rows() != x.n_lags || s_space.rows() != x.pixels()) {
    throw InvalidArgument("basis rows do not match the lagged design layout");
  }
}

inline void project_row(const LaggedView& x, const Matrix& s_time, const Matrix& projected, Index first,
                        Index t, double* out) {
  const Index q = projected.cols();
  const Index df_t = s_time.cols();
  for (Index a = 0; a < df_t * q; ++a) out[a] = 0.0;
  for (Index j = 0; j < x.n_lags; ++j) {
    const Index f = source_frame(x, t, j);
    if (f < 0) continue;
    for (Index a = 0; a < df_t; ++a) {
      const double s = s_time(j, a);
      if (s == 0.0) continue;
      double* dst = out + a * q;
      for (Index c = 0; c < q; ++c) dst[c] += s * projected(f - first, c);
    }
  }
}

inline void apply_row(const LaggedView& x, const Vector& w, Index t, double& out) {
  const Index p = x.pixels();
  double acc = 0.0;
  for (Index j = 0; j < x.n_lags; ++j) {
    const Index f = source_frame(x, t, j);
    if (f < 0) continue;
    const double* frame = x.frames->row(f).data();
    const double* wj = w.data() + j * p;
    for (Index k = 0; k < p; ++k) acc += frame[k] * wj[k];
  }
  out = acc;
}

inline void apply_t_lag(const LaggedView& x, const Vector& r, Index j, double* out) {
  const Index p = x.pixels();
  for (Index k = 0; k < p; ++k) out[k] = 0.0;
  for (Index t = x.begin; t < x.end; ++t) {
    const Index f = source_frame(x, t, j);
    if (f < 0) continue;
    const double rt = r[t - x.begin];
    if (rt == 0.0) continue;
    const double* frame = x.frames->row(f).data();
    for (Index k = 0; k < p; ++k) out[k] += rt * frame[k];
  }
}

inline void nearest_one(const Matrix& points, const Matrix& centroids, Index i, Index& label, double& best) {
  const Index d = points.rows();
  best = std::numeric_limits<double>::infinity();
  label = 0;
  const double* x = points.col(i).data();
  for (Index k = 0; k < centroids.cols(); ++k) {
    const double* c = centroids.col(k).data();
    double acc = 0.0;
    for (Index m = 0; m < d; ++m) {
      const double diff = x[m] - c[m];
      acc += diff * diff;
    }
    if (acc < best) {
      best = acc;
      label = k;
    }
  }
}

}  // namespace

namespace serial {

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      for (Index k = 0; k < b.rows(); ++k)
        for (Index l = 0; l < b.cols(); ++l) out(i * b.rows() + k, j * b.cols() + l) = a(i, j) * b(k, l);
  return out;
}

Matrix build_lagged(const LaggedView& x) {
  check_view(x);
  const Index p = x.pixels();
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Index t = x.begin; t < x.end; ++t)
    for (Index j = 0; j < x.n_lags; ++j) {
      const Index f = source_frame(x, t, j);
      if (f < 0) continue;
      for (Index k = 0; k < p; ++k) out(t - x.begin, j * p + k) = (*x.frames)(f, k);
    }
  return out;
}

Vector lagged_apply(const LaggedView& x, const Vector& w) {
  check_view(x);
  if (w.size() != x.cols()) throw InvalidArgument("coefficient length does not match design columns");
  Vector out(x.rows());
  for (Index t = x.begin; t < x.end; ++t) apply_row(x, w, t, out[t - x.begin]);
  return out;
}

Vector lagged_apply_t(const LaggedView& x, const Vector& r) {
  check_view(x);
  if (r.size() != x.rows()) throw InvalidArgument("residual length does not match design rows");
  Vector out(x.cols());
  for (Index j = 0; j < x.n_lags; ++j) apply_t_lag(x, r, j, out.data() + j * x.pixels());
  return out;
}

Matrix lagged_project(const LaggedView& x, const Matrix& s_time, const Matrix& s_space) {
  check_project(x, s_time, s_space);
  Index first = 0;
  const Matrix projected = project_frames(x, s_space, first);
  RowMatrix out(x.rows(), s_time.cols() * s_space.cols());
  for (Index t = x.begin; t < x.end; ++t) project_row(x, s_time, projected, first, t, out.row(t - x.begin).data());
  return out;
}

Assignment nearest_centroid(const Matrix& points, const Matrix& centroids) {
  if (points.rows() != centroids.rows()) throw InvalidArgument("dimension mismatch in nearest_centroid");
  Assignment a{std::vector<Index>(static_cast<std::size_t>(points.cols())), Vector(points.cols())};
  for (Index i = 0; i < points.cols(); ++i) nearest_one(points, centroids, i, a.label[i], a.dist2[i]);
  return a;
}

}  // namespace serial

namespace omp {

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  const Index cols = out.cols();
#pragma omp parallel for schedule(static)
  for (Index c = 0; c < cols; ++c) {
    const Index j = c / b.cols();
    const Index l = c % b.cols();
    for (Index i = 0; i < a.rows(); ++i) {
      const double aij = a(i, j);
      for (Index k = 0; k < b.rows(); ++k) out(i * b.rows() + k, c) = aij * b(k, l);
    }
  }
  return out;
}

Matrix build_lagged(const LaggedView& x) {
  check_view(x);
  const Index p = x.pixels();
  RowMatrix out = RowMatrix::Zero(x.rows(), x.cols());
#pragma omp parallel for schedule(static)
  for (Index t = x.begin; t < x.end; ++t) {
    for (Index j = 0; j < x.n_lags; ++j) {
      const Index f = source_frame(x, t, j);
      if (f < 0) continue;
      out.row(t - x.begin).segment(j * p, p) = x.frames->row(f);
    }
  }
  return out;
}

Vector lagged_apply(const LaggedView& x, const Vector& w) {
  check_view(x);
  if (w.size() != x.cols()) throw InvalidArgument("coefficient length does not match design columns");
  Vector out(x.rows());
#pragma omp parallel for schedule(static)
  for (Index t = x.begin; t < x.end; ++t) apply_row(x, w, t, out[t - x.begin]);
  return out;
}

Vector lagged_apply_t(const LaggedView& x, const Vector& r) {
  check_view(x);
  if (r.size() != x.rows()) throw InvalidArgument("residual length does not match design rows");
  Vector out(x.cols());
#pragma omp parallel for schedule(static)
  for (Index j = 0; j < x.n_lags; ++j) apply_t_lag(x, r, j, out.data() + j * x.pixels());
  return out;
}

Matrix lagged_project(const LaggedView& x, const Matrix& s_time, const Matrix& s_space) {
  check_project(x, s_time, s_space);
  Index first = 0;
  const Matrix projected = project_frames(x, s_space, first);
  RowMatrix out(x.rows(), s_time.cols() * s_space.cols());
#pragma omp parallel for schedule(static)
  for (Index t = x.begin; t < x.end; ++t) project_row(x, s_time, projected, first, t, out.row(t - x.begin).data());
  return out;
}

Assignment nearest_centroid(const Matrix& points, const Matrix& centroids) {
  if (points.rows() != centroids.rows()) throw InvalidArgument("dimension mismatch in nearest_centroid");
  Assignment a{std::vector<Index>(static_cast<std::size_t>(points.cols())), Vector(points.cols())};
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < points.cols(); ++i) nearest_one(points, centroids, i, a.label[i], a.dist2[i]);
  return a;
}

}  // namespace omp

void set_threads(int n) {
  if (n >= 1) omp_set_num_threads(n);
}

int threads() { return omp_get_max_threads(); }

}  // namespace rfkit::kernels
