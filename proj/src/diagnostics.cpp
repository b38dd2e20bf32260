#include "rfkit/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "rfkit/error.hpp"
#include "rfkit/rng.hpp"

namespace rfkit {

double chi2_sf(double x, double df) {
  if (!(df > 0.0)) throw InvalidArgument("chi-squared df must be > 0");
  if (x <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

double student_t_sf(double t, double df) {
  if (!(df > 0.0)) throw InvalidArgument("Student-t df must be > 0");
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::students_t(df), t));
}

namespace {

Matrix invert_spd(Matrix G, const char* what, std::vector<std::string>* warnings) {
  const Index p = G.rows();
  Eigen::LLT<Matrix> llt(G);
  if (llt.info() != Eigen::Success) {
    const double eps = 1e-10 * std::max(G.trace() / static_cast<double>(p), 1e-300);
    G.diagonal().array() += eps;
    llt.compute(G);
    if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + " is singular even after jitter");
    if (warnings) warnings->push_back(std::string(what) + " was singular; added diagonal jitter");
  }
  Matrix V = llt.solve(Matrix::Identity(p, p));
  return 0.5 * (V + V.transpose());
}

Matrix weighted_gram(const Features& F, const Vector& weights) {
  const Matrix& M = F.matrix();
  Matrix G = Matrix::Zero(M.cols(), M.cols());
  const Matrix Mw = weights.cwiseSqrt().asDiagonal() * M;
  G.selfadjointView<Eigen::Lower>().rankUpdate(Mw.transpose());
  G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
  return G;
}

}  // namespace

Matrix posterior_cov_lg(const Features& F, const Vector& y, const Vector& b, double intercept,
                        std::vector<std::string>* warnings) {
  const Index n = F.rows();
  const Index p = F.cols();
  const Vector r = y - (F.apply(b).array() + intercept).matrix();
  const double dof = n > p ? static_cast<double>(n - p) : static_cast<double>(n);
  const double sigma2 = r.squaredNorm() / dof;
  return invert_spd(weighted_gram(F, Vector::Ones(n)), "S'X'XS", warnings) * sigma2;
}

Matrix posterior_cov_lnp(const Features& F, const Vector& b, double intercept, Nonlinearity f,
                         std::vector<std::string>* warnings) {
  const Vector z = F.apply(b).array() + intercept;
  Vector w(z.size());
  for (Index t = 0; t < z.size(); ++t) {
    const double fz = std::max(apply_nl(f, z[t]), kRateFloor);
    w[t] = 1.0 / (fz * fz);
  }
  if (!w.allFinite()) throw NumericalError("non-finite LNP weights in posterior covariance");
  return invert_spd(weighted_gram(F, w), "S'X'WXS", warnings);
}

Matrix posterior_cov(const ModelSpec& spec, const Features& F, const Coeffs& c, const Vector& y,
                     std::vector<std::string>* warnings) {
  switch (spec.family) {
    case Family::kLG: return posterior_cov_lg(F, y, c.B.col(0), c.intercept, warnings);
    case Family::kLNP: return posterior_cov_lnp(F, c.B.col(0), c.intercept, spec.filter, warnings);
    case Family::kLNLN: break;
  }
  throw InvalidArgument("posterior covariance is defined for LG and LNP models");
}

ConfidenceInterval confidence_interval(const Vector& b, const Matrix& V_b, const std::optional<Matrix>& S) {
  if (V_b.rows() != b.size() || V_b.cols() != b.size()) throw InvalidArgument("V_b must be p x p");
  const Vector var_b = V_b.diagonal();
  if ((var_b.array() < 0.0).any()) throw NumericalError("negative variance on the diagonal of V_b");
  ConfidenceInterval ci;
  const Vector se_b = var_b.cwiseSqrt();
  ci.b_low = b - kZ95 * se_b;
  ci.b_high = b + kZ95 * se_b;
  if (!S) {
    ci.w = b;
    ci.w_low = ci.b_low;
    ci.w_high = ci.b_high;
    return ci;
  }
  if (S->cols() != b.size()) throw InvalidArgument("basis columns must match b");
  ci.w = *S * b;
  const Vector var_w = ((*S * V_b).array() * S->array()).rowwise().sum();
  const Vector se_w = var_w.cwiseMax(0.0).cwiseSqrt();
  ci.w_low = ci.w - kZ95 * se_w;
  ci.w_high = ci.w + kZ95 * se_w;
  return ci;
}

WaldResult wald_test(const Vector& b, const Matrix& V_b) {
  if (V_b.rows() != b.size() || V_b.cols() != b.size()) throw InvalidArgument("V_b must be p x p");
  Matrix V = V_b;
  Eigen::LLT<Matrix> llt(V);
  if (llt.info() != Eigen::Success) {
    V.diagonal().array() += 1e-10 * std::max(V.trace() / static_cast<double>(V.rows()), 1e-300);
    llt.compute(V);
    if (llt.info() != Eigen::Success) throw NumericalError("V_b is singular");
  }
  WaldResult r;
  r.T = b.dot(llt.solve(b));
  r.p = chi2_sf(r.T, static_cast<double>(b.size()));
  return r;
}

PermutationResult permutation_test(const ModelSpec& spec, const Coeffs& c, const DesignMatrix& validation,
                                   const Vector& y_validation, int n_perm, std::uint64_t seed) {
  if (n_perm < 10) throw InvalidArgument("insufficient permutations (minimum 10)");
  if (validation.rows() < 2 || validation.rows() != y_validation.size()) {
    throw DataError("validation set must hold at least two samples matching the response");
  }
  PermutationResult out;
  {
    const Vector pred = predict(spec, c, validation);
    out.true_corr = correlation_or_zero(pred, y_validation);
    if (out.true_corr == 0.0) out.warnings.push_back("zero-variance prediction; correlation set to 0");
  }

  // Only the frames the validation rows touch are copied per repetition.
  const Index first = std::max<Index>(0, validation.begin() - validation.n_lags() + 1);
  const Index offset = validation.begin() - first;
  const RowMatrix window = validation.frames().middleRows(first, validation.end() - first);
  const Index n_val = validation.rows();

  out.perm_corrs.assign(static_cast<std::size_t>(n_perm), 0.0);
  std::vector<char> degenerate(static_cast<std::size_t>(n_perm), 0);
  const Rng base(seed, 7);
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (int rep = 0; rep < n_perm; ++rep) {
    try {
      Rng rng = base.substream(static_cast<std::uint64_t>(rep));
      std::vector<Index> order(static_cast<std::size_t>(n_val));
      std::iota(order.begin(), order.end(), Index{0});
      for (Index i = n_val - 1; i > 0; --i) {
        const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
      }
      auto frames = std::make_shared<RowMatrix>(window);
      for (Index i = 0; i < n_val; ++i) frames->row(offset + i) = window.row(offset + order[static_cast<std::size_t>(i)]);
      const DesignMatrix shuffled(std::move(frames), validation.frame_shape(), validation.n_lags(),
                                  validation.delta_t(), offset, offset + n_val);
      const Vector pred = predict(spec, c, shuffled);
      const double r = correlation_or_zero(pred, y_validation);
      out.perm_corrs[static_cast<std::size_t>(rep)] = r;
      degenerate[static_cast<std::size_t>(rep)] = r == 0.0 ? 1 : 0;
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  if (std::any_of(degenerate.begin(), degenerate.end(), [](char d) { return d != 0; })) {
    out.warnings.push_back("zero-variance permuted prediction; correlation set to 0");
  }

  // One-sided one-sample t-test, H1: true correlation exceeds the permuted ones.
  const double n = static_cast<double>(n_perm);
  double mean = 0.0;
  for (double r : out.perm_corrs) mean += out.true_corr - r;
  mean /= n;
  double ss = 0.0;
  for (double r : out.perm_corrs) ss += (out.true_corr - r - mean) * (out.true_corr - r - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (sd == 0.0) {
    out.p = mean > 0.0 ? 0.0 : 1.0;
  } else {
    out.p = student_t_sf(mean / (sd / std::sqrt(n)), n - 1.0);
  }
  return out;
}

SvdSplit svd_split(const Tensor& w) {
  if (w.rank() != 3) throw InvalidArgument("svd_split needs a (time, x, y) STRF");
  const auto nx = static_cast<Index>(w.dim(1));
  const auto ny = static_cast<Index>(w.dim(2));
  const RowMatrix U = w.unfold();
  if (U.cwiseAbs().maxCoeff() == 0.0) throw DataError("STRF is all zeros");

  Eigen::JacobiSVD<Matrix> svd(Matrix(U), Eigen::ComputeThinU | Eigen::ComputeThinV);
  SvdSplit s;
  s.leading_temporal = svd.matrixU().col(0);
  const Vector v1 = svd.matrixV().col(0);
  s.leading_spatial = Eigen::Map<const RowMatrix>(v1.data(), nx, ny);

  Index px = 0;
  v1.cwiseAbs().maxCoeff(&px);
  s.pixel_x = px / ny;
  s.pixel_y = px % ny;
  s.temporal = U.col(px);
  s.temporal.cwiseAbs().maxCoeff(&s.time_index);
  s.spatial = Eigen::Map<const RowMatrix>(U.row(s.time_index).data(), nx, ny);
  return s;
}

Report diagnose(const ModelSpec& spec, const Coeffs& c, const DesignMatrix& train, const Vector& y_train,
                const DesignMatrix& validation, const Vector& y_validation, int n_perm, std::uint64_t seed) {
  if (spec.family == Family::kLNLN) throw InvalidArgument("diagnostics support LG and LNP models");
  const Features Ft = Features::build(train, spec.basis);
  Report rep;
  const Matrix V_b = posterior_cov(spec, Ft, c, y_train, &rep.warnings);
  const Vector b = c.B.col(0);
  std::optional<Matrix> S;
  if (spec.basis) S = spec.basis->full();
  const ConfidenceInterval ci = confidence_interval(b, V_b, S);
  const Shape shape = train.strf_shape();
  rep.w = Tensor(shape, std::vector<double>(ci.w.data(), ci.w.data() + ci.w.size()));
  rep.ci_low = Tensor(shape, std::vector<double>(ci.w_low.data(), ci.w_low.data() + ci.w_low.size()));
  rep.ci_high = Tensor(shape, std::vector<double>(ci.w_high.data(), ci.w_high.data() + ci.w_high.size()));

  const WaldResult wald = wald_test(b, V_b);
  rep.wald_T = wald.T;
  rep.wald_p = wald.p;

  PermutationResult perm = permutation_test(spec, c, validation, y_validation, n_perm, seed);
  rep.perm_corrs = std::move(perm.perm_corrs);
  rep.perm_p = perm.p;
  rep.warnings.insert(rep.warnings.end(), perm.warnings.begin(), perm.warnings.end());

  rep.train_corr = correlation_or_zero(predict(spec, c, Ft), y_train);
  rep.val_corr = perm.true_corr;
  rep.train_val_gap = rep.train_corr - rep.val_corr;
  return rep;
}

}  // namespace rfkit
