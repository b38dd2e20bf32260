#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rfkit/glm.hpp"
#include "rfkit/tensor.hpp"

namespace rfkit {

enum class TruthKind { kRank2_2d, kDogPair, kGauss3d };
enum class StimulusKind { kWhite, kPink, kBinary };

std::string to_string(TruthKind k);
std::string to_string(StimulusKind k);
TruthKind parse_truth_kind(const std::string& s);
StimulusKind parse_stimulus_kind(const std::string& s);

// Ground-truth STRF(s), each of unit Frobenius norm. Time index j holds lag
// (n_lags - 1 - j), so the most recent frame is last.
struct GroundTruth {
  TruthKind kind = TruthKind::kRank2_2d;
  std::vector<Tensor> filters;  // one for rank2_2d and gauss3d, two for dog_pair
  std::map<std::string, double> params;

  const Shape& shape() const { return filters.at(0).shape(); }
  Index n_lags() const { return static_cast<Index>(shape().at(0)); }
  Shape frame_shape() const { return Shape(shape().begin() + 1, shape().end()); }
  Vector w() const { return filters.at(0).flat(); }
  Matrix W() const;  // d x k
};

// Default dims: rank2_2d (30, 40); dog_pair (20, 20); gauss3d (25, 25, 25).
GroundTruth make_ground_truth(TruthKind kind, Shape dims = {});

// Biphasic temporal kernel over lags 0..n-1: difference of two gamma-shaped bumps.
Vector biphasic_kernel(Index n, double tau, double ratio = 0.6);

Tensor gen_stimulus(StimulusKind kind, Index n_frames, const Shape& frame_shape, std::uint64_t seed);

struct SimConfig {
  double delta_t = 0.033;
  double intercept = 0.0;
  double rate_scale = 10.0;  // R
  double sigma = 1.0;        // LG noise sd
  Nonlinearity filter = Nonlinearity::kExponential;
  Nonlinearity output = Nonlinearity::kSoftplus;
  std::uint64_t seed = 0;
};

// LG: X w + N(0, sigma^2). LNP: Poisson(delta R f(X w + c)).
// LNLN: Poisson(delta R g(sum_k f(X W_k) + c)).
Vector gen_response(const GroundTruth& truth, const Tensor& stimulus, Family family, const SimConfig& config);

// Noise-free rate (Hz) for the Poisson families.
Vector gen_rate(const GroundTruth& truth, const Tensor& stimulus, Family family, const SimConfig& config);

// Intercept giving the requested mean rate (Hz), estimated on a long
// independent stimulus of the given kind.
double calibrate_intercept(const GroundTruth& truth, StimulusKind stimulus, Family family, double target_hz,
                           const SimConfig& config, Index n_frames = 100000);

}  // namespace rfkit
