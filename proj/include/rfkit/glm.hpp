#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rfkit/design.hpp"
#include "rfkit/metrics.hpp"
#include "rfkit/spline_basis.hpp"
#include "rfkit/types.hpp"

namespace rfkit {

enum class Family { kLG, kLNP, kLNLN };
enum class Nonlinearity { kExponential, kSoftplus, kIdentity };

std::string to_string(Family f);
std::string to_string(Nonlinearity f);
Family parse_family(const std::string& s);
Nonlinearity parse_nonlinearity(const std::string& s);

struct ModelSpec {
  Family family = Family::kLG;
  int n_subunits = 1;
  Nonlinearity filter = Nonlinearity::kExponential;  // f
  Nonlinearity output = Nonlinearity::kSoftplus;     // g, LNLN only
  std::optional<SplineBasis> basis;                  // none: one coefficient per pixel
  double intercept = 0.0;
  double delta_t = 0.033;
  double rate_scale = 1.0;  // R

  void validate() const;
};

// Columns the linear stage acts on: X S for spline models, X otherwise. Large
// pixel designs stay implicit and are applied through the lagged kernels.
class Features {
 public:
  static Features dense(Matrix F);
  static Features lagged(DesignMatrix X);
  // X S when a basis is given, else X (dense when it fits in `dense_limit` doubles).
  static Features build(const DesignMatrix& X, const std::optional<SplineBasis>& basis,
                        Index dense_limit = 60'000'000);

  Index rows() const;
  Index cols() const;
  Vector apply(const Vector& b) const;
  Vector apply_t(const Vector& r) const;
  Matrix apply(const Matrix& B) const;
  bool is_dense() const { return std::holds_alternative<Matrix>(data_); }
  const Matrix& matrix() const;

 private:
  std::variant<Matrix, DesignMatrix> data_;
  explicit Features(std::variant<Matrix, DesignMatrix> d) : data_(std::move(d)) {}
};

// One column of B per subunit (p x k).
struct Coeffs {
  Matrix B;
  double intercept = 0.0;
};

// Scalar nonlinearities and their derivatives.
double apply_nl(Nonlinearity f, double x);
double derive_nl(Nonlinearity f, double x);

constexpr double kRateFloor = 1e-12;

// ---- Costs (smooth part plus alpha * L1 of the filter coefficients) ------

// (1/n) sum (y - F b - c)^2 + alpha ||b||_1
double cost_lg(const Vector& b, double intercept, const Features& F, const Vector& y, double alpha);
double cost_lg(const Vector& b, const Matrix& X, const Vector& y, const Matrix& S, double alpha);

// sum(-y log lambda + delta lambda) + alpha ||b||_1, lambda = R f(F b + c)
double cost_lnp(const Vector& b, double intercept, const Features& F, const Vector& y, double alpha,
                double delta_t, Nonlinearity f, double rate_scale = 1.0);
double cost_lnp(const Vector& b, double intercept, const Matrix& X, const Vector& y, const Matrix& S,
                double alpha, double delta_t, Nonlinearity f);

// lambda = R g(c + sum_k f(F b_k))
double cost_lnln(const Matrix& B, double intercept, const Features& F, const Vector& y, double alpha,
                 double delta_t, Nonlinearity f, Nonlinearity g, double rate_scale = 1.0);
double cost_lnln(const Matrix& B, double intercept, const Matrix& X, const Vector& y, const Matrix& S,
                 double alpha, double delta_t, Nonlinearity f, Nonlinearity g);

// Cost of the model family in `spec`. alpha = 0 gives the data term alone.
double cost(const ModelSpec& spec, const Coeffs& c, const Features& F, const Vector& y, double alpha);

// Gradient of the smooth part (L1 excluded) with respect to B and the intercept.
struct Gradient {
  Matrix B;
  double intercept = 0.0;
};

Gradient gradient(const ModelSpec& spec, const Coeffs& c, const Features& F, const Vector& y);

// Predicted rate (LG: the linear response).
Vector predict(const ModelSpec& spec, const Coeffs& c, const Features& F);
Vector predict(const ModelSpec& spec, const Coeffs& c, const DesignMatrix& X);

// ---- Fitting -------------------------------------------------------------

enum class ProxScaling {
  kPreconditioned,  // threshold lr * alpha / (sqrt(v_hat) + eps), matching the adaptive step
  kPlain,           // threshold lr * alpha
};

struct FitOptions {
  double l1_weight = 0.0;
  int max_iters = 1500;
  double lr = 0.03;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int window = 10;
  double train_tol = 1e-5;
  std::uint64_t seed = 0;
  std::optional<double> init_noise_sd;  // default 0.01 * sd(initial coefficients)
  std::optional<Coeffs> init;
  ProxScaling prox = ProxScaling::kPreconditioned;
  bool fit_intercept = true;

  void validate() const;
};

struct FitData {
  Features train;
  Vector y_train;
  Features validation;
  Vector y_validation;
};

FitData make_fit_data(const DesignMatrix& X, const Vector& y, const DataSplit& split,
                      const std::optional<SplineBasis>& basis);

enum class StopReason { kMaxIters, kTrainPlateau, kValIncrease };
std::string to_string(StopReason r);

struct History {
  std::vector<double> train_cost;
  std::vector<double> validation_cost;
  std::vector<double> train_corr;
  std::vector<double> validation_corr;

  std::size_t size() const { return train_cost.size(); }
};

struct FitResult {
  Coeffs coeffs;  // at the minimum validation cost
  Coeffs init;
  History history;  // entry 0 is the initial state
  StopReason stopped_by = StopReason::kMaxIters;
  int best_iter = 0;
  int iterations = 0;

  // STRF (or per-subunit STRFs as columns) in point space.
  Matrix filters(const ModelSpec& spec) const;
};

// Starting point: linearised least-squares estimate with a calibrated intercept.
Coeffs initial_coeffs(const ModelSpec& spec, const Features& F, const Vector& y);

// Maximum-likelihood intercept for fixed B (LG: mean residual; exponential
// LNP: the mean predicted count equals the mean count).
double calibrate_model_intercept(const ModelSpec& spec, const Matrix& B, const Features& F, const Vector& y);

// Starting coefficients from point-space filters (d x k): projected onto the
// basis, each column scaled to unit drive sd on F, intercept calibrated.
Coeffs coeffs_from_filters(const ModelSpec& spec, const Matrix& W, const Features& F, const Vector& y);

FitResult fit(const ModelSpec& spec, const FitData& data, const FitOptions& opts);

// ---- Grid searches -------------------------------------------------------

struct DfGridResult {
  std::vector<std::vector<int>> cells;  // df per dimension, row-major over the grid
  std::vector<double> scores;           // validation correlation
  std::size_t best = 0;
  std::vector<int> best_df() const { return cells.at(best); }
};

// Fits spl_wsta for every df combination (time, x, y order) and scores it by
// validation correlation.
DfGridResult gridsearch_df(const DesignMatrix& train, const Vector& y_train, const DesignMatrix& validation,
                           const Vector& y_validation, const std::vector<std::vector<int>>& df_grid);

struct L1GridResult {
  std::vector<double> alphas;  // those actually fitted
  std::vector<double> scores;  // validation correlation
  std::vector<FitResult> fits;
  std::size_t best = 0;
  double best_alpha() const { return alphas.at(best); }
};

// Ascending alpha search, interrupted as soon as a score falls below the previous one.
L1GridResult gridsearch_l1(const ModelSpec& spec, const FitData& data, const FitOptions& opts,
                           const std::vector<double>& alphas);

}  // namespace rfkit
