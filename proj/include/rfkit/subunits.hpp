#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rfkit/design.hpp"
#include "rfkit/types.hpp"

namespace rfkit {

// One row per spike: the stimulus vector preceding it, repeated per count.
struct SpikeTriggeredEnsemble {
  Matrix V;  // n_spikes x d
};

SpikeTriggeredEnsemble ste(const Matrix& X, const Vector& y);
SpikeTriggeredEnsemble ste(const DesignMatrix& X, const Vector& y);

// V^T ~= W H^T with W (d x k) and H (n_spikes x k).
struct FactorizationResult {
  Matrix W;
  Matrix H;
  std::optional<Matrix> B;  // spline coefficients (p x k), spline variants only
  std::vector<double> objective_history;
  int iterations = 0;
  bool converged = false;
};

FactorizationResult kmeans_subunits(const SpikeTriggeredEnsemble& ste, int k, const std::optional<Matrix>& S,
                                    std::uint64_t seed, int max_iters = 300);

struct SemiNmfOptions {
  int max_iters = 500;
  double tol = 1e-6;                 // relative objective change
  std::optional<Matrix> init_h;      // default: k-means labels + 0.2
};

FactorizationResult seminmf_subunits(const SpikeTriggeredEnsemble& ste, int k, const std::optional<Matrix>& S,
                                     std::uint64_t seed, const SemiNmfOptions& opts = {});

struct SubunitMatch {
  std::vector<int> assignment;  // assignment[i] = estimated column matched to truth column i
  std::vector<double> scale;    // least-squares scale of truth i onto its match (sign included)
  std::vector<double> mse;      // mean squared residual after that scaling
  std::vector<double> normalized_mse;  // sign-corrected normalized MSE
  bool greedy = false;
  std::vector<std::string> warnings;

  double mean_normalized_mse() const;
};

SubunitMatch match_subunits(const Matrix& estimated, const Matrix& truth);

}  // namespace rfkit
