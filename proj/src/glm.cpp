#include "rfkit/glm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rfkit/closed_form.hpp"
#include "rfkit/error.hpp"
#include "rfkit/rng.hpp"

namespace rfkit {

std::string to_string(Family f) {
  switch (f) {
    case Family::kLG: return "lg";
    case Family::kLNP: return "lnp";
    case Family::kLNLN: return "lnln";
  }
  return "?";
}

std::string to_string(Nonlinearity f) {
  switch (f) {
    case Nonlinearity::kExponential: return "exp";
    case Nonlinearity::kSoftplus: return "softplus";
    case Nonlinearity::kIdentity: return "identity";
  }
  return "?";
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::kMaxIters: return "max_iters";
    case StopReason::kTrainPlateau: return "train_plateau";
    case StopReason::kValIncrease: return "val_increase";
  }
  return "?";
}

Family parse_family(const std::string& s) {
  if (s == "lg") return Family::kLG;
  if (s == "lnp") return Family::kLNP;
  if (s == "lnln") return Family::kLNLN;
  throw InvalidArgument("unknown model family '" + s + "'");
}

Nonlinearity parse_nonlinearity(const std::string& s) {
  if (s == "exp" || s == "exponential") return Nonlinearity::kExponential;
  if (s == "softplus") return Nonlinearity::kSoftplus;
  if (s == "identity") return Nonlinearity::kIdentity;
  throw InvalidArgument("unknown nonlinearity '" + s + "'");
}

void ModelSpec::validate() const {
  if (n_subunits < 1) throw InvalidArgument("n_subunits must be >= 1");
  if (family != Family::kLNLN && n_subunits != 1) throw InvalidArgument("LG and LNP models have one filter");
  if (family != Family::kLG && filter == Nonlinearity::kIdentity) {
    throw InvalidArgument("filter nonlinearity must be exp or softplus");
  }
  if (!(delta_t > 0.0)) throw InvalidArgument("delta_t must be > 0");
  if (!(rate_scale > 0.0)) throw InvalidArgument("rate_scale must be > 0");
}

void FitOptions::validate() const {
  if (!(lr > 0.0)) throw InvalidArgument("learning rate must be > 0");
  if (window < 1) throw InvalidArgument("early-stop window must be >= 1");
  if (l1_weight < 0.0) throw InvalidArgument("l1 weight must be >= 0");
  if (max_iters < 0) throw InvalidArgument("max_iters must be >= 0");
}

// ---- Features -------------------------------------------------------------

Features Features::dense(Matrix F) { return Features(std::move(F)); }
Features Features::lagged(DesignMatrix X) { return Features(std::move(X)); }

Features Features::build(const DesignMatrix& X, const std::optional<SplineBasis>& basis, Index dense_limit) {
  if (basis && !is_identity(*basis)) return dense(X.project(*basis));
  if (basis && basis->num_points() != X.cols()) throw InvalidArgument("basis does not match the design");
  if (X.rows() * X.cols() <= dense_limit) return dense(X.materialize());
  return lagged(X);
}

Index Features::rows() const {
  return std::visit([](const auto& d) -> Index { return d.rows(); }, data_);
}

Index Features::cols() const {
  return std::visit([](const auto& d) -> Index { return d.cols(); }, data_);
}

Vector Features::apply(const Vector& b) const {
  if (b.size() != cols()) throw InvalidArgument("coefficient length does not match features");
  if (const auto* m = std::get_if<Matrix>(&data_)) return *m * b;
  return std::get<DesignMatrix>(data_).apply(b);
}

Vector Features::apply_t(const Vector& r) const {
  if (r.size() != rows()) throw InvalidArgument("residual length does not match features");
  if (const auto* m = std::get_if<Matrix>(&data_)) return m->transpose() * r;
  return std::get<DesignMatrix>(data_).apply_t(r);
}

Matrix Features::apply(const Matrix& B) const {
  if (B.rows() != cols()) throw InvalidArgument("coefficient rows do not match features");
  if (const auto* m = std::get_if<Matrix>(&data_)) return *m * B;
  Matrix U(rows(), B.cols());
  for (Index k = 0; k < B.cols(); ++k) U.col(k) = apply(Vector(B.col(k)));
  return U;
}

const Matrix& Features::matrix() const {
  if (const auto* m = std::get_if<Matrix>(&data_)) return *m;
  throw InvalidArgument("features are implicit; no dense matrix available");
}

// ---- Nonlinearities -------------------------------------------------------

double apply_nl(Nonlinearity f, double x) {
  switch (f) {
    case Nonlinearity::kExponential: return std::exp(x);
    case Nonlinearity::kSoftplus: return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    case Nonlinearity::kIdentity: return x;
  }
  return x;
}

double derive_nl(Nonlinearity f, double x) {
  switch (f) {
    case Nonlinearity::kExponential: return std::exp(x);
    case Nonlinearity::kSoftplus: return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    case Nonlinearity::kIdentity: return 1.0;
  }
  return 1.0;
}

namespace {

double inverse_nl(Nonlinearity f, double v) {
  switch (f) {
    case Nonlinearity::kExponential: return std::log(v);
    case Nonlinearity::kSoftplus: return v > 30.0 ? v + std::log1p(-std::exp(-v)) : std::log(std::expm1(v));
    case Nonlinearity::kIdentity: return v;
  }
  return v;
}

int subunit_count(const ModelSpec& spec) { return spec.family == Family::kLNLN ? spec.n_subunits : 1; }

// Pre-floor drive entering the output nonlinearity (LNLN) or f (LNP), for
// linear predictors U (n x k).
Vector drive(const ModelSpec& spec, const Matrix& U, double c) {
  if (spec.family != Family::kLNLN) return U.col(0).array() + c;
  Vector s = Vector::Constant(U.rows(), c);
  for (Index k = 0; k < U.cols(); ++k)
    for (Index t = 0; t < U.rows(); ++t) s[t] += apply_nl(spec.filter, U(t, k));
  return s;
}

Nonlinearity outer(const ModelSpec& spec) {
  return spec.family == Family::kLNLN ? spec.output : spec.filter;
}

Vector rate_from_linear(const ModelSpec& spec, const Matrix& U, double c) {
  const Vector s = drive(spec, U, c);
  if (spec.family == Family::kLG) return s;
  const Nonlinearity g = outer(spec);
  Vector lam(s.size());
  for (Index t = 0; t < s.size(); ++t) lam[t] = std::max(spec.rate_scale * apply_nl(g, s[t]), kRateFloor);
  return lam;
}

double poisson_term(const Vector& lam, const Vector& y, double delta_t) {
  double acc = 0.0;
  for (Index t = 0; t < y.size(); ++t) acc += -y[t] * std::log(lam[t]) + delta_t * lam[t];
  if (!std::isfinite(acc)) throw NumericalError("non-finite rate in Poisson cost");
  return acc;
}

double data_cost(const ModelSpec& spec, const Matrix& U, double c, const Vector& y) {
  if (U.rows() != y.size()) throw InvalidArgument("response length does not match features");
  if (spec.family == Family::kLG) {
    const double mse = (y - drive(spec, U, c)).squaredNorm() / static_cast<double>(y.size());
    if (!std::isfinite(mse)) throw NumericalError("non-finite LG cost");
    return mse;
  }
  return poisson_term(rate_from_linear(spec, U, c), y, spec.delta_t);
}

double l1(const Matrix& B) { return B.cwiseAbs().sum(); }

void check_shape(const ModelSpec& spec, const Coeffs& c, const Features& F) {
  if (c.B.rows() != F.cols() || c.B.cols() != subunit_count(spec)) {
    throw InvalidArgument("coefficients must be " + std::to_string(F.cols()) + " x " +
                          std::to_string(subunit_count(spec)));
  }
}

ModelSpec family_spec(Family fam, Nonlinearity f, Nonlinearity g, double delta_t, double rate_scale, int k) {
  ModelSpec s;
  s.family = fam;
  s.filter = f;
  s.output = g;
  s.delta_t = delta_t;
  s.rate_scale = rate_scale;
  s.n_subunits = k;
  return s;
}

}  // namespace

// ---- Costs -----------------------------------------------------------------

double cost(const ModelSpec& spec, const Coeffs& c, const Features& F, const Vector& y, double alpha) {
  check_shape(spec, c, F);
  return data_cost(spec, F.apply(c.B), c.intercept, y) + alpha * l1(c.B);
}

double cost_lg(const Vector& b, double intercept, const Features& F, const Vector& y, double alpha) {
  const ModelSpec s = family_spec(Family::kLG, Nonlinearity::kIdentity, Nonlinearity::kIdentity, 1.0, 1.0, 1);
  return cost(s, {b, intercept}, F, y, alpha);
}

double cost_lg(const Vector& b, const Matrix& X, const Vector& y, const Matrix& S, double alpha) {
  return cost_lg(b, 0.0, Features::dense(X * S), y, alpha);
}

double cost_lnp(const Vector& b, double intercept, const Features& F, const Vector& y, double alpha,
                double delta_t, Nonlinearity f, double rate_scale) {
  const ModelSpec s = family_spec(Family::kLNP, f, Nonlinearity::kIdentity, delta_t, rate_scale, 1);
  return cost(s, {b, intercept}, F, y, alpha);
}

double cost_lnp(const Vector& b, double intercept, const Matrix& X, const Vector& y, const Matrix& S,
                double alpha, double delta_t, Nonlinearity f) {
  return cost_lnp(b, intercept, Features::dense(X * S), y, alpha, delta_t, f);
}

double cost_lnln(const Matrix& B, double intercept, const Features& F, const Vector& y, double alpha,
                 double delta_t, Nonlinearity f, Nonlinearity g, double rate_scale) {
  const ModelSpec s =
      family_spec(Family::kLNLN, f, g, delta_t, rate_scale, static_cast<int>(B.cols()));
  return cost(s, {B, intercept}, F, y, alpha);
}

double cost_lnln(const Matrix& B, double intercept, const Matrix& X, const Vector& y, const Matrix& S,
                 double alpha, double delta_t, Nonlinearity f, Nonlinearity g) {
  return cost_lnln(B, intercept, Features::dense(X * S), y, alpha, delta_t, f, g);
}

// ---- Gradient --------------------------------------------------------------

Gradient gradient(const ModelSpec& spec, const Coeffs& c, const Features& F, const Vector& y) {
  check_shape(spec, c, F);
  const Matrix U = F.apply(c.B);
  const Index n = U.rows();
  if (n != y.size()) throw InvalidArgument("response length does not match features");
  Gradient g;
  g.B.resize(c.B.rows(), c.B.cols());

  if (spec.family == Family::kLG) {
    const Vector r = y - drive(spec, U, c.intercept);
    const double scale = -2.0 / static_cast<double>(n);
    g.B.col(0) = scale * F.apply_t(r);
    g.intercept = scale * r.sum();
    return g;
  }

  // d cost / d drive, with the rate floor treated as flat.
  const Vector s = drive(spec, U, c.intercept);
  const Nonlinearity out = outer(spec);
  Vector ds(n);
  for (Index t = 0; t < n; ++t) {
    const double raw = spec.rate_scale * apply_nl(out, s[t]);
    if (raw < kRateFloor) {
      ds[t] = 0.0;
      continue;
    }
    ds[t] = (spec.delta_t - y[t] / raw) * spec.rate_scale * derive_nl(out, s[t]);
  }
  g.intercept = ds.sum();
  if (spec.family == Family::kLNP) {
    g.B.col(0) = F.apply_t(ds);
    return g;
  }
  for (Index k = 0; k < U.cols(); ++k) {
    Vector dk(n);
    for (Index t = 0; t < n; ++t) dk[t] = ds[t] * derive_nl(spec.filter, U(t, k));
    g.B.col(k) = F.apply_t(dk);
  }
  return g;
}

// ---- Prediction ------------------------------------------------------------

Vector predict(const ModelSpec& spec, const Coeffs& c, const Features& F) {
  check_shape(spec, c, F);
  return rate_from_linear(spec, F.apply(c.B), c.intercept);
}

Vector predict(const ModelSpec& spec, const Coeffs& c, const DesignMatrix& X) {
  return predict(spec, c, Features::build(X, spec.basis));
}

// ---- Fitting ---------------------------------------------------------------

FitData make_fit_data(const DesignMatrix& X, const Vector& y, const DataSplit& split,
                      const std::optional<SplineBasis>& basis) {
  if (y.size() != X.rows()) throw InvalidArgument("response length must equal design rows");
  if (split.validation.size() <= 0) throw DataError("validation set is empty");
  const auto& tr = split.train;
  const auto& va = split.validation;
  return {Features::build(X.rows_slice(tr.begin, tr.end), basis), y.segment(tr.begin, tr.size()),
          Features::build(X.rows_slice(va.begin, va.end), basis), y.segment(va.begin, va.size())};
}

Matrix FitResult::filters(const ModelSpec& spec) const {
  if (spec.basis) return spec.basis->full() * coeffs.B;
  return coeffs.B;
}

Coeffs initial_coeffs(const ModelSpec& spec, const Features& F, const Vector& y) {
  spec.validate();
  if (F.rows() != y.size()) throw InvalidArgument("response length does not match features");
  const double ybar = y.mean();
  const Vector yc = y.array() - ybar;

  // Least squares with an intercept (column-centred). Implicit features fall
  // back to the scaled cross-correlation, the best estimate along the STA.
  Vector b_ls;
  double a_ls = ybar;
  if (F.is_dense()) {
    const Matrix& M = F.matrix();
    const Eigen::RowVectorXd mean = M.colwise().mean();
    const Matrix Mc = M.rowwise() - mean;
    b_ls = least_squares(Mc, yc);
    a_ls = ybar - mean.dot(b_ls);
  } else {
    const Vector s = F.apply_t(yc);
    const Vector Fs = F.apply(s);
    const Vector Fs_c = Fs.array() - Fs.mean();
    const double denom = Fs_c.squaredNorm();
    b_ls = denom > 0.0 ? Vector(s * (Fs_c.dot(yc) / denom)) : Vector::Zero(F.cols());
    a_ls = ybar - Fs.mean() * (denom > 0.0 ? Fs_c.dot(yc) / denom : 0.0);
  }

  const int k = subunit_count(spec);
  Coeffs c;
  if (spec.family == Family::kLG) {
    c.B = b_ls;
    c.intercept = a_ls;
    return c;
  }

  if (!(ybar > 0.0)) throw DataError("response has no spikes");
  const double target = ybar / (spec.delta_t * spec.rate_scale);  // g(drive) at the mean
  const Nonlinearity out = outer(spec);
  const double s0 = inverse_nl(out, target);
  double gain = spec.delta_t * spec.rate_scale * derive_nl(out, s0);
  if (spec.family == Family::kLNLN) gain *= derive_nl(spec.filter, 0.0);
  const Vector b_sum = b_ls / gain;
  c.B = b_sum.replicate(1, k) / static_cast<double>(k);
  c.intercept = calibrate_model_intercept(spec, c.B, F, y);
  return c;
}

double calibrate_model_intercept(const ModelSpec& spec, const Matrix& B, const Features& F, const Vector& y) {
  spec.validate();
  const double ybar = y.mean();
  if (spec.family == Family::kLG) return ybar - F.apply(B).col(0).mean();
  if (!(ybar > 0.0)) throw DataError("response has no spikes");
  // Root of the intercept derivative of the Poisson data term (convex in c).
  const Matrix U = F.apply(B);
  const Nonlinearity g = outer(spec);
  auto slope = [&](double cc) {
    const Vector s = drive(spec, U, cc);
    double acc = 0.0;
    for (Index t = 0; t < s.size(); ++t) {
      const double gp = derive_nl(g, s[t]);
      acc += spec.delta_t * spec.rate_scale * gp;
      if (y[t] > 0.0) {
        const double gv = apply_nl(g, s[t]);
        acc -= y[t] * (g == Nonlinearity::kExponential || s[t] < -30.0 || gv == 0.0 ? 1.0 : gp / gv);
      }
    }
    return acc;
  };
  double lo = -1.0, hi = 1.0;
  for (int i = 0; i < 60 && slope(lo) > 0.0; ++i) lo = 2.0 * lo - 1.0;
  for (int i = 0; i < 60 && slope(hi) < 0.0; ++i) hi = 2.0 * hi + 1.0;
  if (!(slope(lo) <= 0.0 && slope(hi) >= 0.0)) {
    throw NumericalError("no finite maximum-likelihood intercept for these filters");
  }
  for (int i = 0; i < 200 && hi - lo > 1e-12; ++i) {
    const double mid = 0.5 * (lo + hi);
    (slope(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Coeffs coeffs_from_filters(const ModelSpec& spec, const Matrix& W, const Features& F, const Vector& y) {
  spec.validate();
  Coeffs c;
  c.B = spec.basis ? Matrix(Eigen::CompleteOrthogonalDecomposition<Matrix>(spec.basis->full()).solve(W)) : W;
  if (c.B.rows() != F.cols()) throw InvalidArgument("filters do not match the feature columns");
  const Matrix U = F.apply(c.B);
  for (Index k = 0; k < c.B.cols(); ++k) {
    const double sd = std::sqrt((U.col(k).array() - U.col(k).mean()).square().mean());
    if (sd > 0.0) c.B.col(k) /= sd;
  }
  c.intercept = calibrate_model_intercept(spec, c.B, F, y);
  return c;
}

namespace {

struct Snapshot {
  double train_cost;
  double val_cost;
  double train_corr;
  double val_corr;
};

Snapshot evaluate(const ModelSpec& spec, const Coeffs& c, const FitData& d, double alpha) {
  const Matrix Ut = d.train.apply(c.B);
  const Matrix Uv = d.validation.apply(c.B);
  Snapshot s;
  s.train_cost = data_cost(spec, Ut, c.intercept, d.y_train) + alpha * l1(c.B);
  s.val_cost = data_cost(spec, Uv, c.intercept, d.y_validation);
  s.train_corr = correlation_or_zero(rate_from_linear(spec, Ut, c.intercept), d.y_train);
  s.val_corr = correlation_or_zero(rate_from_linear(spec, Uv, c.intercept), d.y_validation);
  return s;
}

double soft_threshold(double x, double thr) {
  if (x > thr) return x - thr;
  if (x < -thr) return x + thr;
  return 0.0;
}

}  // namespace

FitResult fit(const ModelSpec& spec, const FitData& data, const FitOptions& opts) {
  spec.validate();
  opts.validate();
  if (data.y_validation.size() == 0) throw DataError("validation set is empty");
  if (data.train.cols() != data.validation.cols()) throw InvalidArgument("train/validation features differ");
  const int k = subunit_count(spec);
  const Index p = data.train.cols();

  FitResult res;
  Coeffs cur = opts.init ? *opts.init : initial_coeffs(spec, data.train, data.y_train);
  if (cur.B.rows() != p || cur.B.cols() != k) throw InvalidArgument("initial coefficients have the wrong shape");
  if (!opts.fit_intercept && !opts.init) cur.intercept = spec.intercept;

  {
    const Vector flat = cur.B.reshaped();
    const double sd = flat.size() > 1 ? std::sqrt((flat.array() - flat.mean()).square().sum() /
                                                  static_cast<double>(flat.size() - 1))
                                      : 0.0;
    const double noise_sd = opts.init_noise_sd.value_or(0.01 * sd);
    if (noise_sd > 0.0) {
      Rng rng(opts.seed, 0);
      for (Index j = 0; j < cur.B.cols(); ++j)
        for (Index i = 0; i < cur.B.rows(); ++i) cur.B(i, j) += noise_sd * rng.normal();
    }
  }
  res.init = cur;

  auto record = [&](const Snapshot& s) {
    res.history.train_cost.push_back(s.train_cost);
    res.history.validation_cost.push_back(s.val_cost);
    res.history.train_corr.push_back(s.train_corr);
    res.history.validation_corr.push_back(s.val_corr);
  };

  const double alpha = opts.l1_weight;
  Snapshot snap;
  try {
    snap = evaluate(spec, cur, data, alpha);
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("initial state: ") + e.what());
  }
  record(snap);
  res.coeffs = cur;
  double best_val = snap.val_cost;

  Matrix m = Matrix::Zero(p, k), v = Matrix::Zero(p, k);
  double mc = 0.0, vc = 0.0;
  double b1t = 1.0, b2t = 1.0;
  const auto& tc = res.history.train_cost;
  const auto& vcst = res.history.validation_cost;
  const auto w = static_cast<std::size_t>(opts.window);

  for (int it = 1; it <= opts.max_iters; ++it) {
    Gradient g;
    try {
      g = gradient(spec, cur, data.train, data.y_train);
    } catch (const NumericalError& e) {
      throw NumericalError("diverged at iteration " + std::to_string(it) + ": " + e.what());
    }
    b1t *= opts.beta1;
    b2t *= opts.beta2;
    m = opts.beta1 * m + (1.0 - opts.beta1) * g.B;
    v = opts.beta2 * v + (1.0 - opts.beta2) * g.B.cwiseAbs2();
    for (Index j = 0; j < k; ++j)
      for (Index i = 0; i < p; ++i) {
        const double denom = std::sqrt(v(i, j) / (1.0 - b2t)) + opts.eps;
        double x = cur.B(i, j) - opts.lr * (m(i, j) / (1.0 - b1t)) / denom;
        if (alpha > 0.0) {
          const double thr = opts.prox == ProxScaling::kPreconditioned ? opts.lr * alpha / denom : opts.lr * alpha;
          x = soft_threshold(x, thr);
        }
        cur.B(i, j) = x;
      }
    if (opts.fit_intercept) {
      mc = opts.beta1 * mc + (1.0 - opts.beta1) * g.intercept;
      vc = opts.beta2 * vc + (1.0 - opts.beta2) * g.intercept * g.intercept;
      cur.intercept -= opts.lr * (mc / (1.0 - b1t)) / (std::sqrt(vc / (1.0 - b2t)) + opts.eps);
    }

    try {
      snap = evaluate(spec, cur, data, alpha);
    } catch (const NumericalError& e) {
      throw NumericalError("diverged at iteration " + std::to_string(it) + ": " + e.what());
    }
    if (!std::isfinite(snap.train_cost) || !std::isfinite(snap.val_cost)) {
      throw NumericalError("diverged at iteration " + std::to_string(it) + ": cost is not finite");
    }
    record(snap);
    res.iterations = it;
    if (snap.val_cost < best_val) {
      best_val = snap.val_cost;
      res.best_iter = it;
      res.coeffs = cur;
    }

    if (tc.size() > w) {
      bool plateau = true, rising = true;
      for (std::size_t i = tc.size() - w; i < tc.size(); ++i) {
        plateau = plateau && std::abs(tc[i] - tc[i - 1]) < opts.train_tol;
        rising = rising && vcst[i] > vcst[i - 1];
      }
      if (plateau) {
        res.stopped_by = StopReason::kTrainPlateau;
        break;
      }
      if (rising) {
        res.stopped_by = StopReason::kValIncrease;
        break;
      }
    }
  }
  return res;
}

}  // namespace rfkit
