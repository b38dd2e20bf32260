#include "rfkit/metrics.hpp"

#include <cmath>

#include "rfkit/error.hpp"

namespace rfkit {

namespace {

bool centered_norms(const Vector& a, const Vector& b, double& r) {
  if (a.size() != b.size() || a.size() < 2) throw DataError("correlation needs two vectors of equal length >= 2");
  const Vector da = a.array() - a.mean();
  const Vector db = b.array() - b.mean();
  const double na = da.norm();
  const double nb = db.norm();
  if (!(na > 0.0) || !(nb > 0.0)) return false;
  r = da.dot(db) / (na * nb);
  return true;
}

}  // namespace

double pearson(const Vector& a, const Vector& b) {
  double r = 0.0;
  if (!centered_norms(a, b, r)) throw DataError("correlation of a zero-variance vector");
  return r;
}

double correlation_or_zero(const Vector& a, const Vector& b) {
  double r = 0.0;
  return centered_norms(a, b, r) ? r : 0.0;
}

double normalized_mse(const Vector& w_est, const Vector& w_true) {
  if (w_est.size() != w_true.size() || w_est.size() == 0) throw DataError("normalized_mse needs equal non-empty sizes");
  const double ne = w_est.norm();
  const double nt = w_true.norm();
  if (!(ne > 0.0) || !(nt > 0.0)) throw DataError("normalized_mse of a zero-norm tensor");
  return ((w_est / ne) - (w_true / nt)).squaredNorm() / static_cast<double>(w_est.size());
}

}  // namespace rfkit
