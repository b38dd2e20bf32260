#pragma once

#include <optional>
#include <span>
#include <vector>

#include "rfkit/design.hpp"
#include "rfkit/spline_basis.hpp"
#include "rfkit/types.hpp"

namespace rfkit {

// ---- Non-iterative estimators -------------------------------------------

enum class StaNormalization {
  kSpikeCount,  // divide by sum(y)
  kSamples,     // divide by rows(X), for continuous responses
};

Vector sta(const Matrix& X, const Vector& y, StaNormalization norm = StaNormalization::kSpikeCount);
Vector sta(const DesignMatrix& X, const Vector& y, StaNormalization norm = StaNormalization::kSpikeCount);

// Minimum-norm least-squares solution of A x ~= y, through the Gram matrix and
// a complete orthogonal decomposition (rank revealing, no explicit inverse).
Vector least_squares(const Matrix& A, const Vector& y);

Vector wsta(const Matrix& X, const Vector& y);

struct SplineEstimate {
  Vector b;
  Vector w;
};

SplineEstimate spl_wsta(const Matrix& X, const Vector& y, const Matrix& S);
// Structured variant: X S is formed directly from the stimulus frames.
SplineEstimate spl_wsta(const DesignMatrix& X, const Vector& y, const SplineBasis& basis);

// ---- Gaussian priors and evidence ---------------------------------------

enum class PriorKind { kASD, kALD };

struct PriorCov {
  PriorKind kind = PriorKind::kASD;
  std::vector<Index> dims;
  // Overall log-scale: C is multiplied by exp(-rho).
  double rho = 0.0;
  // ASD smoothness length per dimension.
  std::vector<double> delta;
  // ALD locality (space-time) and frequency parameters per dimension.
  std::vector<double> tau_s, nu_s, tau_f, nu_f;
  Matrix C;
};

PriorCov asd_cov(const std::vector<Vector>& coords, double rho, std::span<const double> delta);
PriorCov asd_cov(const std::vector<Index>& dims, double rho, std::span<const double> delta);

PriorCov ald_cov(const std::vector<Index>& dims, std::span<const double> tau_s, std::span<const double> nu_s,
                 std::span<const double> tau_f, std::span<const double> nu_f, double rho = 0.0);

// Orthonormal real Fourier basis (rows are basis vectors) and the angular
// frequency of every row.
Matrix real_dft_basis(Index n);
Vector real_dft_frequencies(Index n);

// Sufficient statistics of a linear-Gaussian problem.
struct GaussianStats {
  Matrix xtx;
  Vector xty;
  double yty = 0.0;
  Index n = 0;
};

GaussianStats gaussian_stats(const Matrix& X, const Vector& y);

enum class EvidenceForm {
  kCompact,             // (n/2)log|2 pi s2| + (1/n)log|C/Lambda| - (1/n)mu'Lambda mu + y'y/(2 s2)
  kMarginalLikelihood,  // exact negative log marginal likelihood of the linear-Gaussian model
};

struct EvidenceState {
  double sigma2 = 1.0;
  Vector mu;
  Matrix Lambda;
  double nle = 0.0;
};

// Diagonal jitter added to C before it is inverted: 1e-7 * trace(C) / d.
double prior_jitter(const Matrix& C);

EvidenceState map_estimate(const GaussianStats& stats, const Matrix& C, double sigma2,
                           EvidenceForm form = EvidenceForm::kCompact);
EvidenceState map_estimate(const Matrix& X, const Vector& y, const Matrix& C, double sigma2);

double neg_log_evidence(const GaussianStats& stats, const Matrix& C, double sigma2,
                        EvidenceForm form = EvidenceForm::kCompact);
double neg_log_evidence(const Matrix& X, const Vector& y, const Matrix& C, double sigma2,
                        EvidenceForm form = EvidenceForm::kCompact);

struct EvidenceOptions {
  int max_evaluations = 500;
  double tolerance = 1e-6;
  bool optimize_noise = true;
  std::optional<double> sigma2;  // initial (or fixed) noise variance
  // Starting point in the optimiser's parameter space (see EvidenceFit::params).
  std::optional<std::vector<double>> init;
  double initial_step = 0.5;
};

struct EvidenceFit {
  PriorCov prior;
  EvidenceState state;
  double cost = 0.0;
  int evaluations = 0;
  bool converged = false;
  // ASD: [rho, log delta_d...]; ALD: [rho, (log tau_s, nu_s, log tau_f, nu_f) per dim];
  // log sigma2 appended when the noise is optimised.
  std::vector<double> params;
};

// Minimises the exact negative log marginal likelihood over the prior
// hyperparameters (and log sigma2) with a derivative-free simplex search.
EvidenceFit evidence_optimize(const Matrix& X, const Vector& y, PriorKind kind, const std::vector<Index>& dims,
                              const EvidenceOptions& options = {});

// Hyperparameter vector -> covariance (same layout as EvidenceFit::params, without noise).
PriorCov prior_from_params(PriorKind kind, const std::vector<Index>& dims, std::span<const double> params);

}  // namespace rfkit
