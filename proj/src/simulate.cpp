#include "rfkit/simulate.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "rfkit/design.hpp"
#include "rfkit/error.hpp"
#include "rfkit/rng.hpp"

namespace rfkit {

namespace {

constexpr std::uint64_t kStimulusStream = 1;
constexpr std::uint64_t kResponseStream = 2;

Tensor normalized(const Shape& shape, std::vector<double> data) {
  double ss = 0.0;
  for (double v : data) ss += v * v;
  const double norm = std::sqrt(ss);
  if (!(norm > 0.0)) throw InvalidArgument("ground truth has zero norm");
  for (double& v : data) v /= norm;
  return Tensor(shape, std::move(data));
}

Vector gaussian(Index n, double center, double sd) {
  Vector g(n);
  for (Index i = 0; i < n; ++i) g[i] = std::exp(-0.5 * std::pow((static_cast<double>(i) - center) / sd, 2));
  return g;
}

// Lag-indexed kernel -> STRF time axis (oldest lag first).
Vector lag_to_time(const Vector& by_lag) { return by_lag.reverse(); }

}  // namespace

std::string to_string(TruthKind k) {
  switch (k) {
    case TruthKind::kRank2_2d: return "rank2_2d";
    case TruthKind::kDogPair: return "dog_pair";
    case TruthKind::kGauss3d: return "gauss3d";
  }
  return "?";
}

std::string to_string(StimulusKind k) {
  switch (k) {
    case StimulusKind::kWhite: return "white";
    case StimulusKind::kPink: return "pink";
    case StimulusKind::kBinary: return "binary";
  }
  return "?";
}

TruthKind parse_truth_kind(const std::string& s) {
  if (s == "rank2_2d") return TruthKind::kRank2_2d;
  if (s == "dog_pair") return TruthKind::kDogPair;
  if (s == "gauss3d") return TruthKind::kGauss3d;
  throw InvalidArgument("unknown ground truth '" + s + "'");
}

StimulusKind parse_stimulus_kind(const std::string& s) {
  if (s == "white") return StimulusKind::kWhite;
  if (s == "pink") return StimulusKind::kPink;
  if (s == "binary") return StimulusKind::kBinary;
  throw InvalidArgument("unknown stimulus '" + s + "'");
}

Matrix GroundTruth::W() const {
  Matrix W(static_cast<Index>(filters.at(0).size()), static_cast<Index>(filters.size()));
  for (std::size_t k = 0; k < filters.size(); ++k) W.col(static_cast<Index>(k)) = filters[k].flat();
  return W;
}

Vector biphasic_kernel(Index n, double tau, double ratio) {
  // Gamma bump (l/tau)^3 exp(-l/tau), scaled to peak 1 at l = 3 tau.
  auto bump = [](double l, double t) {
    const double x = l / t;
    return std::pow(x / 3.0, 3) * std::exp(3.0 - x);
  };
  Vector k(n);
  for (Index l = 0; l < n; ++l) {
    const double lag = static_cast<double>(l);
    k[l] = bump(lag, tau) - ratio * bump(lag, 1.6 * tau);
  }
  return k;
}

GroundTruth make_ground_truth(TruthKind kind, Shape dims) {
  GroundTruth g;
  g.kind = kind;
  switch (kind) {
    case TruthKind::kRank2_2d: {
      if (dims.empty()) dims = {30, 40};
      if (dims.size() != 2 || dims[0] < 4 || dims[1] < 4) throw InvalidArgument("rank2_2d needs (time >= 4, x >= 4)");
      const auto nt = static_cast<Index>(dims[0]);
      const auto nx = static_cast<Index>(dims[1]);
      const double st = static_cast<double>(nt) / 30.0;
      const double sx = static_cast<double>(nx) / 40.0;
      g.params = {{"tau1", 2.0 * st},      {"tau2", 2.8 * st},      {"center1", 14.0 * sx},
                  {"center2", 26.0 * sx},  {"width1", 3.5 * sx},    {"width2", 4.5 * sx},
                  {"amp2", -0.7}};
      const Vector t1 = lag_to_time(biphasic_kernel(nt, g.params["tau1"]));
      const Vector t2 = lag_to_time(biphasic_kernel(nt, g.params["tau2"]));
      const Vector s1 = gaussian(nx, g.params["center1"], g.params["width1"]);
      const Vector s2 = gaussian(nx, g.params["center2"], g.params["width2"]);
      const RowMatrix w = t1 * s1.transpose() + g.params["amp2"] * t2 * s2.transpose();
      g.filters.push_back(normalized(dims, std::vector<double>(w.data(), w.data() + w.size())));
      break;
    }
    case TruthKind::kDogPair: {
      if (dims.empty()) dims = {20, 20};
      if (dims.size() != 2 || dims[0] < 4 || dims[1] < 4) throw InvalidArgument("dog_pair needs (time >= 4, x >= 4)");
      const auto nt = static_cast<Index>(dims[0]);
      const auto nx = static_cast<Index>(dims[1]);
      const double sx = static_cast<double>(nx) / 20.0;
      const double center = std::round(0.3 * static_cast<double>(nx - 1));
      g.params = {{"tau", 1.5 * static_cast<double>(nt) / 20.0},
                  {"center1", center},
                  {"center2", static_cast<double>(nx - 1) - center},
                  {"sigma_center", 1.5 * sx},
                  {"sigma_surround", 3.0 * sx},
                  {"surround_weight", 0.4}};
      const Vector t = lag_to_time(biphasic_kernel(nt, g.params["tau"]));
      const Vector dog = gaussian(nx, center, g.params["sigma_center"]) -
                         g.params["surround_weight"] * gaussian(nx, center, g.params["sigma_surround"]);
      const RowMatrix w1 = t * dog.transpose();
      // Antagonistic partner: sign-flipped mirror image.
      const RowMatrix w2 = -w1.rowwise().reverse();
      g.filters.push_back(normalized(dims, std::vector<double>(w1.data(), w1.data() + w1.size())));
      g.filters.push_back(normalized(dims, std::vector<double>(w2.data(), w2.data() + w2.size())));
      break;
    }
    case TruthKind::kGauss3d: {
      if (dims.empty()) dims = {25, 25, 25};
      if (dims.size() != 3 || dims[0] < 4 || dims[1] < 3 || dims[2] < 3) {
        throw InvalidArgument("gauss3d needs (time >= 4, x >= 3, y >= 3)");
      }
      const auto nt = static_cast<Index>(dims[0]);
      const auto nx = static_cast<Index>(dims[1]);
      const auto ny = static_cast<Index>(dims[2]);
      const double st = static_cast<double>(nt) / 25.0;
      g.params = {{"center_x", static_cast<double>(nx - 1) / 2.0},
                  {"center_y", static_cast<double>(ny - 1) / 2.0},
                  {"sigma", 3.0 * static_cast<double>(std::min(nx, ny)) / 25.0},
                  {"dip_lag", 2.0 * st},
                  {"dip_width", 1.2 * st},
                  {"rebound_lag", 6.0 * st},
                  {"rebound_width", 2.5 * st},
                  {"rebound_amp", 0.3}};
      Vector by_lag(nt);
      for (Index l = 0; l < nt; ++l) {
        const double lag = static_cast<double>(l);
        by_lag[l] = -std::exp(-0.5 * std::pow((lag - g.params["dip_lag"]) / g.params["dip_width"], 2)) +
                    g.params["rebound_amp"] *
                        std::exp(-0.5 * std::pow((lag - g.params["rebound_lag"]) / g.params["rebound_width"], 2));
      }
      const Vector t = lag_to_time(by_lag);
      const Vector gx = gaussian(nx, g.params["center_x"], g.params["sigma"]);
      const Vector gy = gaussian(ny, g.params["center_y"], g.params["sigma"]);
      std::vector<double> data;
      data.reserve(static_cast<std::size_t>(nt * nx * ny));
      for (Index i = 0; i < nt; ++i)
        for (Index x = 0; x < nx; ++x)
          for (Index y = 0; y < ny; ++y) data.push_back(t[i] * gx[x] * gy[y]);
      g.filters.push_back(normalized(dims, std::move(data)));
      break;
    }
  }
  return g;
}

Tensor gen_stimulus(StimulusKind kind, Index n_frames, const Shape& frame_shape, std::uint64_t seed) {
  if (n_frames < 1) throw InvalidArgument("n_frames must be >= 1");
  const auto pixels = static_cast<Index>(shape_product(frame_shape));
  Shape shape{static_cast<std::size_t>(n_frames)};
  shape.insert(shape.end(), frame_shape.begin(), frame_shape.end());
  Rng rng(seed, kStimulusStream);
  std::vector<double> data(static_cast<std::size_t>(n_frames * pixels));

  switch (kind) {
    case StimulusKind::kWhite:
      for (double& v : data) v = rng.normal();
      break;
    case StimulusKind::kBinary:
      for (double& v : data) v = rng.below(2) == 0 ? -1.0 : 1.0;
      break;
    case StimulusKind::kPink: {
      for (double& v : data) v = rng.normal();
      // Shape each pixel's time course to a 1/f power spectrum.
      Eigen::FFT<double> fft;
      std::vector<double> series(static_cast<std::size_t>(n_frames));
      std::vector<std::complex<double>> spec;
      for (Index p = 0; p < pixels; ++p) {
        for (Index t = 0; t < n_frames; ++t) series[static_cast<std::size_t>(t)] = data[static_cast<std::size_t>(t * pixels + p)];
        fft.fwd(spec, series);
        for (std::size_t f = 0; f < spec.size(); ++f) {
          const std::size_t k = std::min(f, spec.size() - f);  // folded frequency index
          spec[f] = k == 0 ? std::complex<double>(0.0) : spec[f] / std::sqrt(static_cast<double>(k));
        }
        fft.inv(series, spec);
        double mean = 0.0;
        for (double v : series) mean += v;
        mean /= static_cast<double>(n_frames);
        double var = 0.0;
        for (double v : series) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n_frames);
        const double scale = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
        for (Index t = 0; t < n_frames; ++t)
          data[static_cast<std::size_t>(t * pixels + p)] = (series[static_cast<std::size_t>(t)] - mean) * scale;
      }
      break;
    }
  }
  return Tensor(std::move(shape), std::move(data));
}

namespace {

void check_truth_stimulus(const GroundTruth& truth, const Tensor& stimulus) {
  if (stimulus.rank() != truth.shape().size()) throw InvalidArgument("stimulus rank does not match the ground truth");
  for (std::size_t a = 1; a < stimulus.rank(); ++a)
    if (stimulus.dim(a) != truth.shape()[a]) throw InvalidArgument("stimulus frame shape does not match the ground truth");
}

// Drive entering the output stage, per time bin.
Vector drive(const GroundTruth& truth, const Tensor& stimulus, Family family, const SimConfig& cfg) {
  check_truth_stimulus(truth, stimulus);
  const DesignMatrix X = build_design(stimulus, truth.n_lags(), cfg.delta_t);
  if (family == Family::kLNLN) {
    Vector s = Vector::Constant(X.rows(), cfg.intercept);
    for (const Tensor& f : truth.filters) {
      const Vector u = X.apply(f.flat());
      for (Index t = 0; t < s.size(); ++t) s[t] += apply_nl(cfg.filter, u[t]);
    }
    return s;
  }
  const Vector u = X.apply(truth.w());
  return family == Family::kLG ? u : Vector(u.array() + cfg.intercept);
}

Vector rate_from_drive(const Vector& s, Family family, const SimConfig& cfg) {
  const Nonlinearity g = family == Family::kLNLN ? cfg.output : cfg.filter;
  Vector lam(s.size());
  for (Index t = 0; t < s.size(); ++t) lam[t] = cfg.rate_scale * apply_nl(g, s[t]);
  return lam;
}

}  // namespace

Vector gen_rate(const GroundTruth& truth, const Tensor& stimulus, Family family, const SimConfig& config) {
  if (family == Family::kLG) throw InvalidArgument("LG responses have no rate");
  return rate_from_drive(drive(truth, stimulus, family, config), family, config);
}

Vector gen_response(const GroundTruth& truth, const Tensor& stimulus, Family family, const SimConfig& config) {
  if (!(config.delta_t > 0.0)) throw InvalidArgument("delta_t must be > 0");
  Rng rng(config.seed, kResponseStream);
  if (family == Family::kLG) {
    Vector y = drive(truth, stimulus, family, config);
    if (config.sigma < 0.0) throw InvalidArgument("sigma must be >= 0");
    if (config.sigma > 0.0)
      for (Index t = 0; t < y.size(); ++t) y[t] += config.sigma * rng.normal();
    return y;
  }
  const Vector lam = gen_rate(truth, stimulus, family, config);
  Vector y(lam.size());
  for (Index t = 0; t < lam.size(); ++t) {
    const double mean = lam[t] * config.delta_t;
    if (!std::isfinite(mean) || mean > 100.0) {
      throw NumericalError("expected spike count per bin exceeds 100 at t=" + std::to_string(t) +
                           "; use a smaller intercept");
    }
    y[t] = static_cast<double>(rng.poisson(mean));
  }
  return y;
}

double calibrate_intercept(const GroundTruth& truth, StimulusKind stimulus, Family family, double target_hz,
                           const SimConfig& config, Index n_frames) {
  if (family == Family::kLG) throw InvalidArgument("LG responses have no rate to calibrate");
  if (!(target_hz > 0.0)) throw InvalidArgument("target rate must be > 0");
  const Tensor stim = gen_stimulus(stimulus, n_frames, truth.frame_shape(), config.seed ^ 0x9e3779b97f4a7c15ULL);
  SimConfig cfg = config;
  cfg.intercept = 0.0;
  const Vector s0 = drive(truth, stim, family, cfg);
  auto mean_rate = [&](double c) { return rate_from_drive(Vector(s0.array() + c), family, cfg).mean(); };
  double lo = -1.0, hi = 1.0;
  for (int i = 0; i < 200 && mean_rate(lo) > target_hz; ++i) lo = 2.0 * lo - 1.0;
  for (int i = 0; i < 200 && mean_rate(hi) < target_hz; ++i) hi = 2.0 * hi + 1.0;
  for (int i = 0; i < 200 && hi - lo > 1e-12; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mean_rate(mid) < target_hz ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace rfkit
