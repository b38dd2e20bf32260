#include <cmath>
#include <limits>
#include <numbers>

#include <gsl/gsl_multimin.h>

#include "rfkit/closed_form.hpp"
#include "rfkit/error.hpp"

namespace rfkit {

namespace {

struct Factored {
  Eigen::LLT<Matrix> prior;  // of C + jitter
  Eigen::LLT<Matrix> post;   // of Lambda^{-1}
  Matrix Lambda;
  Vector mu;
};

Factored factor(const GaussianStats& s, const Matrix& C, double sigma2) {
  const Index d = C.rows();
  if (C.cols() != d || s.xtx.rows() != d) throw InvalidArgument("prior covariance size does not match X");
  if (!(sigma2 > 0.0)) throw InvalidArgument("sigma2 must be > 0");
  Matrix Cj = C;
  Cj.diagonal().array() += prior_jitter(C);
  Factored f;
  f.prior.compute(Cj);
  if (f.prior.info() != Eigen::Success) throw NumericalError("prior covariance is not positive definite after jitter");
  Matrix A = f.prior.solve(Matrix::Identity(d, d));
  A = 0.5 * (A + A.transpose());
  A += s.xtx / sigma2;
  f.post.compute(A);
  if (f.post.info() != Eigen::Success) throw NumericalError("posterior precision is singular after jitter");
  f.Lambda = f.post.solve(Matrix::Identity(d, d));
  f.mu = f.Lambda * s.xty / sigma2;
  return f;
}

double log_det(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double evidence_value(const GaussianStats& s, const Factored& f, double sigma2, EvidenceForm form) {
  const double n = static_cast<double>(s.n);
  // log|C Lambda^{-1}| = log|C| + log|Lambda^{-1}|
  const double log_det_c_over_lambda = log_det(f.prior) + log_det(f.post);
  const double two_pi_s2 = 2.0 * std::numbers::pi * sigma2;
  if (form == EvidenceForm::kCompact) {
    return 0.5 * n * std::log(two_pi_s2) + log_det_c_over_lambda / n - f.mu.dot(f.Lambda * f.mu) / n +
           s.yty / (2.0 * sigma2);
  }
  // mu' Lambda^{-1} mu = mu' X'y / sigma2
  const double quad = f.mu.dot(s.xty) / sigma2;
  return 0.5 * (n * std::log(two_pi_s2) + log_det_c_over_lambda + s.yty / sigma2 - quad);
}

std::size_t hyper_count(PriorKind kind, std::size_t nd) { return kind == PriorKind::kASD ? 1 + nd : 1 + 4 * nd; }

struct Problem {
  const GaussianStats* stats;
  PriorKind kind;
  std::vector<Index> dims;
  bool optimize_noise;
  double fixed_sigma2;
  int evaluations = 0;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_params;
};

double sigma2_of(const Problem& p, std::span<const double> x) {
  return p.optimize_noise ? std::exp(x.back()) : p.fixed_sigma2;
}

double objective(const gsl_vector* v, void* data) {
  auto& p = *static_cast<Problem*>(data);
  std::vector<double> x(v->size);
  for (std::size_t i = 0; i < v->size; ++i) x[i] = gsl_vector_get(v, i);
  ++p.evaluations;
  double cost = std::numeric_limits<double>::infinity();
  try {
    const std::span<const double> hyper(x.data(), hyper_count(p.kind, p.dims.size()));
    const PriorCov prior = prior_from_params(p.kind, p.dims, hyper);
    const double s2 = sigma2_of(p, x);
    cost = evidence_value(*p.stats, factor(*p.stats, prior.C, s2), s2, EvidenceForm::kMarginalLikelihood);
  } catch (const Error&) {
    cost = std::numeric_limits<double>::infinity();
  }
  if (!std::isfinite(cost)) cost = std::numeric_limits<double>::max();
  if (cost < p.best) {
    p.best = cost;
    p.best_params = x;
  }
  return cost;
}

std::vector<double> default_start(const Matrix& X, const Vector& y, const GaussianStats& s, PriorKind kind,
                                  const std::vector<Index>& dims) {
  const Index d = X.cols();
  // Ridge estimate sets the prior scale.
  Matrix A = s.xtx;
  A.diagonal().array() += s.xtx.trace() / static_cast<double>(d);
  const Vector w = A.ldlt().solve(s.xty);
  const double scale = std::max(w.squaredNorm() / static_cast<double>(d), 1e-12);
  std::vector<double> x{-std::log(scale)};
  if (kind == PriorKind::kASD) {
    for (std::size_t i = 0; i < dims.size(); ++i) x.push_back(0.0);  // log delta = 0
    return x;
  }
  // ALD locality centred on the STA's centre of mass.
  const Vector a = (X.transpose() * y).cwiseAbs();
  const double total = std::max(a.sum(), 1e-300);
  Index stride = d;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    stride /= dims[i];
    double com = 0.0;
    for (Index k = 0; k < d; ++k) com += a[k] * static_cast<double>((k / stride) % dims[i]);
    com /= total;
    x.push_back(std::log(static_cast<double>(dims[i]) / 4.0));  // log tau_s
    x.push_back(com);                                            // nu_s
    x.push_back(0.0);                                            // log tau_f
    x.push_back(0.0);                                            // nu_f
  }
  return x;
}

}  // namespace

double prior_jitter(const Matrix& C) { return 1e-7 * C.trace() / static_cast<double>(C.rows()); }

EvidenceState map_estimate(const GaussianStats& stats, const Matrix& C, double sigma2, EvidenceForm form) {
  Factored f = factor(stats, C, sigma2);
  EvidenceState e;
  e.sigma2 = sigma2;
  e.nle = evidence_value(stats, f, sigma2, form);
  e.mu = std::move(f.mu);
  e.Lambda = std::move(f.Lambda);
  return e;
}

EvidenceState map_estimate(const Matrix& X, const Vector& y, const Matrix& C, double sigma2) {
  return map_estimate(gaussian_stats(X, y), C, sigma2);
}

double neg_log_evidence(const GaussianStats& stats, const Matrix& C, double sigma2, EvidenceForm form) {
  return evidence_value(stats, factor(stats, C, sigma2), sigma2, form);
}

double neg_log_evidence(const Matrix& X, const Vector& y, const Matrix& C, double sigma2, EvidenceForm form) {
  return neg_log_evidence(gaussian_stats(X, y), C, sigma2, form);
}

PriorCov prior_from_params(PriorKind kind, const std::vector<Index>& dims, std::span<const double> params) {
  const std::size_t nd = dims.size();
  if (params.size() != hyper_count(kind, nd)) throw InvalidArgument("wrong number of prior hyperparameters");
  const double rho = params[0];
  if (kind == PriorKind::kASD) {
    std::vector<double> delta;
    for (std::size_t i = 0; i < nd; ++i) delta.push_back(std::exp(params[1 + i]));
    return asd_cov(dims, rho, delta);
  }
  std::vector<double> tau_s, nu_s, tau_f, nu_f;
  for (std::size_t i = 0; i < nd; ++i) {
    tau_s.push_back(std::exp(params[1 + 4 * i]));
    nu_s.push_back(params[2 + 4 * i]);
    tau_f.push_back(std::exp(params[3 + 4 * i]));
    nu_f.push_back(params[4 + 4 * i]);
  }
  return ald_cov(dims, tau_s, nu_s, tau_f, nu_f, rho);
}

EvidenceFit evidence_optimize(const Matrix& X, const Vector& y, PriorKind kind, const std::vector<Index>& dims,
                              const EvidenceOptions& options) {
  if (X.rows() < 10) throw DataError("evidence optimisation needs at least 10 samples");
  Index d = 1;
  for (Index n : dims) d *= n;
  if (d != X.cols()) throw InvalidArgument("prior dims do not match cols(X)");

  const GaussianStats stats = gaussian_stats(X, y);
  Problem problem{&stats, kind, dims, options.optimize_noise, 0.0, 0, std::numeric_limits<double>::infinity(), {}};
  const double var_y = std::max((y.array() - y.mean()).square().mean(), 1e-12);
  problem.fixed_sigma2 = options.sigma2.value_or(0.5 * var_y);

  std::vector<double> start = options.init ? *options.init : default_start(X, y, stats, kind, dims);
  const std::size_t hyper = hyper_count(kind, dims.size());
  if (options.optimize_noise && start.size() == hyper) start.push_back(std::log(problem.fixed_sigma2));
  if (start.size() != hyper + (options.optimize_noise ? 1 : 0)) {
    throw InvalidArgument("initial parameter vector has the wrong length");
  }

  const std::size_t np = start.size();
  gsl_multimin_function fn{&objective, np, &problem};
  gsl_vector* x0 = gsl_vector_alloc(np);
  gsl_vector* step = gsl_vector_alloc(np);
  for (std::size_t i = 0; i < np; ++i) {
    gsl_vector_set(x0, i, start[i]);
    gsl_vector_set(step, i, options.initial_step);
  }
  gsl_multimin_fminimizer* solver = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, np);
  gsl_multimin_fminimizer_set(solver, &fn, x0, step);

  // Stop once the best cost has moved less than `tolerance` over a full
  // window of simplex iterations and the simplex has collapsed.
  const std::size_t window = 4 * np + 4;
  std::vector<double> best_history;
  bool converged = false;
  while (problem.evaluations < options.max_evaluations) {
    if (gsl_multimin_fminimizer_iterate(solver) != GSL_SUCCESS) break;
    best_history.push_back(problem.best);
    const double size = gsl_multimin_fminimizer_size(solver);
    if (best_history.size() > window) {
      const double moved = best_history[best_history.size() - 1 - window] - best_history.back();
      if (moved < options.tolerance && size < 1e-3) {
        converged = true;
        break;
      }
    }
    if (size < 1e-7) {
      converged = true;
      break;
    }
  }
  gsl_multimin_fminimizer_free(solver);
  gsl_vector_free(x0);
  gsl_vector_free(step);

  if (problem.best_params.empty()) throw NumericalError("evidence optimisation never produced a finite cost");
  EvidenceFit fit;
  fit.params = problem.best_params;
  fit.evaluations = problem.evaluations;
  fit.converged = converged;
  fit.prior = prior_from_params(kind, dims, std::span<const double>(fit.params.data(), hyper));
  const double s2 = sigma2_of(problem, fit.params);
  fit.state = map_estimate(stats, fit.prior.C, s2, EvidenceForm::kMarginalLikelihood);
  fit.cost = fit.state.nle;
  return fit;
}

}  // namespace rfkit
