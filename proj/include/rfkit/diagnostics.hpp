#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rfkit/design.hpp"
#include "rfkit/glm.hpp"
#include "rfkit/metrics.hpp"
#include "rfkit/tensor.hpp"

namespace rfkit {

// Upper tail probabilities.
double chi2_sf(double x, double df);
double student_t_sf(double t, double df);

// LG: (F'F)^{-1} sigma2 with sigma2 = RSS / (n - p) on the training data.
Matrix posterior_cov_lg(const Features& F, const Vector& y, const Vector& b, double intercept,
                        std::vector<std::string>* warnings = nullptr);
// LNP: (F' W F)^{-1} with w_ii = 1 / f(F b + c)^2.
Matrix posterior_cov_lnp(const Features& F, const Vector& b, double intercept, Nonlinearity f,
                         std::vector<std::string>* warnings = nullptr);
Matrix posterior_cov(const ModelSpec& spec, const Features& F, const Coeffs& c, const Vector& y,
                     std::vector<std::string>* warnings = nullptr);

struct ConfidenceInterval {
  Vector b_low, b_high;
  Vector w, w_low, w_high;  // point space (w = S b); equal to the b-space values without a basis
};

constexpr double kZ95 = 1.96;

ConfidenceInterval confidence_interval(const Vector& b, const Matrix& V_b, const std::optional<Matrix>& S = {});

struct WaldResult {
  double T = 0.0;
  double p = 1.0;
};

WaldResult wald_test(const Vector& b, const Matrix& V_b);

struct PermutationResult {
  double true_corr = 0.0;
  std::vector<double> perm_corrs;
  double p = 1.0;
  std::vector<std::string> warnings;
};

// Shuffles the frame order inside the validation window (history frames before
// it are kept), rebuilds the design and correlates the prediction with y.
PermutationResult permutation_test(const ModelSpec& spec, const Coeffs& c, const DesignMatrix& validation,
                                   const Vector& y_validation, int n_perm, std::uint64_t seed);

struct SvdSplit {
  Vector temporal;          // original STRF at the extremum pixel
  Matrix spatial;           // original frame at the temporal extremum (x by y)
  Index pixel_x = 0, pixel_y = 0;
  Index time_index = 0;
  Vector leading_temporal;  // first left singular vector
  Matrix leading_spatial;   // first right singular vector as a frame
};

SvdSplit svd_split(const Tensor& w);

struct Report {
  Tensor w;
  Tensor ci_low;
  Tensor ci_high;
  double wald_T = 0.0;
  double wald_p = 1.0;
  std::vector<double> perm_corrs;
  double perm_p = 1.0;
  double train_corr = 0.0;
  double val_corr = 0.0;
  double train_val_gap = 0.0;
  std::vector<std::string> warnings;
};

// Full diagnostics bundle for an LG or LNP fit.
Report diagnose(const ModelSpec& spec, const Coeffs& c, const DesignMatrix& train, const Vector& y_train,
                const DesignMatrix& validation, const Vector& y_validation, int n_perm, std::uint64_t seed);

}  // namespace rfkit
