#include "rfkit/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>

#include "rfkit/closed_form.hpp"
#include "rfkit/diagnostics.hpp"
#include "rfkit/error.hpp"
#include "rfkit/rng.hpp"
#include "rfkit/subunits.hpp"

namespace rfkit {

BenchmarkConfig figure_preset(int figure) {
  BenchmarkConfig c;
  c.figure = figure;
  switch (figure) {
    case 4:
      c.lengths = {0.5, 1, 2, 4, 8, 16, 32, 64};
      c.methods = {"sta", "wsta", "spl_wsta", "spl_l1"};
      c.df = {9, 12};
      // LG cost is a mean over samples, so useful weights are far below the
      // Poisson-scale grid.
      for (int i = 1; i <= 10; ++i) c.l1_grid.push_back(0.01 * i);
      // Unit-norm filters put the coefficients near 0.05; the default Adam step
      // would jitter around the optimum.
      c.lr = 0.003;
      break;
    case 5:
      c.lengths = {0.5, 1, 2, 4, 8, 16, 32, 64};
      c.methods = {"sta", "wsta", "lnp_l1", "lnp_spl"};
      c.df = {9, 12};
      for (int i = 0; i <= 10; ++i) c.l1_grid.push_back(0.5 + 0.1 * i);
      for (int i = 0; i <= 10; ++i) c.l1_grid_pixel.push_back(i);
      break;
    case 9:
      c.lengths = {0.5, 1, 2, 4, 8, 16, 32, 64};
      c.methods = {"kmeans", "kmeans_spl", "seminmf", "seminmf_spl", "lnln", "lnln_spl"};
      c.df = {8, 8};
      c.l1_grid = {1.0};
      c.l1_grid_pixel = {1.0};
      break;
    case 7:
      c.lengths = {1.0};
      c.n_seeds = 1;
      c.methods = {"B", "C", "D", "E"};
      c.df = {9, 9, 9};
      c.l1_grid = {0.0};
      break;
    default:
      throw InvalidArgument("figure must be one of 4, 5, 7, 9");
  }
  return c;
}

double BenchmarkResult::mean_mse(const std::string& method, double length) const {
  double acc = 0.0;
  int n = 0;
  for (const auto& r : rows)
    if (r.method == method && r.length == length && r.error.empty()) {
      acc += r.mse;
      ++n;
    }
  return n > 0 ? acc / n : std::nan("");
}

double BenchmarkResult::mean_extra(const std::string& method, double length, const std::string& key) const {
  double acc = 0.0;
  int n = 0;
  for (const auto& r : rows) {
    if (r.method != method || r.length != length || !r.error.empty()) continue;
    const auto it = r.extra.find(key);
    if (it == r.extra.end()) continue;
    acc += it->second;
    ++n;
  }
  return n > 0 ? acc / n : std::nan("");
}

namespace {

using Clock = std::chrono::steady_clock;

struct Cell {
  std::size_t length_index;
  int seed_index;
  std::uint64_t seed;
};

struct Dataset {
  GroundTruth truth;
  DesignMatrix X;
  Vector y;
  DataSplit split;
  double delta_t;
  double intercept;
};

SplineBasis make_basis(const Shape& strf, const std::vector<int>& df) {
  if (df.size() != strf.size()) throw InvalidArgument("need one df per STRF dimension");
  std::vector<DimSpec> dims;
  for (std::size_t a = 0; a < strf.size(); ++a) dims.push_back({static_cast<int>(strf[a]), df[a]});
  return tensor_basis(dims);
}

Index training_samples(const BenchmarkConfig& c, double length, Index d) {
  if (c.figure == 4 || c.figure == 7) return static_cast<Index>(std::llround(length * static_cast<double>(d)));
  return frames_for(length * 60.0, 0.033);
}

Dataset simulate_cell(const BenchmarkConfig& c, const GroundTruth& truth, Family family, Index n_train,
                      std::uint64_t seed, double intercept, double sigma) {
  const Index n_val =
      std::max(c.min_validation, static_cast<Index>(std::llround(c.validation_fraction * static_cast<double>(n_train))));
  const Tensor stim = gen_stimulus(c.stimulus, n_train + n_val, truth.frame_shape(), seed);
  SimConfig sc;
  sc.seed = seed;
  sc.intercept = intercept;
  sc.sigma = sigma;
  Dataset d{truth, build_design(stim, truth.n_lags(), 0.033), gen_response(truth, stim, family, sc),
            split(n_train + n_val, n_train, n_val, 0, 0), 0.033, intercept};
  return d;
}

BenchmarkRow timed(const std::string& method, double length, int seed_index, Index n_train,
                   const std::function<void(BenchmarkRow&)>& body) {
  BenchmarkRow row;
  row.method = method;
  row.length = length;
  row.seed = seed_index;
  row.n_train = n_train;
  const auto t0 = Clock::now();
  try {
    body(row);
  } catch (const std::exception& e) {
    row.error = e.what();
    row.mse = std::nan("");
  }
  row.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return row;
}

double best_of_grid(const ModelSpec& spec, const FitData& data, const FitOptions& opts,
                    const std::vector<double>& grid, Vector& w_out) {
  const L1GridResult g = gridsearch_l1(spec, data, opts, grid);
  w_out = g.fits[g.best].filters(spec).col(0);
  return g.best_alpha();
}

// ---- Figure 4 / 5: single-filter estimators -------------------------------

std::vector<BenchmarkRow> run_single_filter(const BenchmarkConfig& c, const Cell& cell, const GroundTruth& truth,
                                            double intercept) {
  const double length = c.lengths[cell.length_index];
  const Index d = static_cast<Index>(truth.filters[0].size());
  const Index n_train = training_samples(c, length, d);
  const Family family = c.figure == 4 ? Family::kLG : Family::kLNP;
  const Dataset ds = simulate_cell(c, truth, family, n_train, cell.seed, intercept, 1.0);
  const DesignMatrix Xtr = ds.X.rows_slice(ds.split.train.begin, ds.split.train.end);
  const Vector ytr = ds.y.segment(ds.split.train.begin, ds.split.train.size());
  const Vector w_true = truth.w();
  const SplineBasis basis = make_basis(truth.shape(), c.df);
  const StaNormalization norm = family == Family::kLG ? StaNormalization::kSamples : StaNormalization::kSpikeCount;

  std::vector<BenchmarkRow> rows;
  for (const std::string& m : c.methods) {
    rows.push_back(timed(m, length, cell.seed_index, n_train, [&](BenchmarkRow& row) {
      Vector w;
      if (m == "sta") {
        w = sta(Xtr, ytr, norm);
      } else if (m == "wsta") {
        w = wsta(Xtr.materialize(), ytr);
      } else if (m == "spl_wsta") {
        w = spl_wsta(Xtr, ytr, basis).w;
      } else if (m == "asd" || m == "ald") {
        std::vector<Index> dims;
        for (auto s : truth.shape()) dims.push_back(static_cast<Index>(s));
        const EvidenceFit ef =
            evidence_optimize(Xtr.materialize(), ytr, m == "asd" ? PriorKind::kASD : PriorKind::kALD, dims);
        w = ef.state.mu;
        row.extra["evaluations"] = ef.evaluations;
      } else if (m == "spl_l1" || m == "lnp_spl" || m == "lnp_l1" || m == "lg_l1") {
        const bool spline = m == "spl_l1" || m == "lnp_spl";
        ModelSpec spec;
        spec.family = family;
        spec.filter = Nonlinearity::kExponential;
        spec.delta_t = ds.delta_t;
        if (spline) spec.basis = basis;
        const FitData data = make_fit_data(ds.X, ds.y, ds.split, spec.basis);
        FitOptions opts;
        opts.max_iters = c.max_iters;
        opts.lr = c.lr;
        opts.seed = cell.seed;
        const auto& grid = spline || c.l1_grid_pixel.empty() ? c.l1_grid : c.l1_grid_pixel;
        row.extra["alpha"] = best_of_grid(spec, data, opts, grid, w);
      } else {
        throw InvalidArgument("unknown method '" + m + "' for figure " + std::to_string(c.figure));
      }
      row.mse = normalized_mse(w, w_true);
    }));
  }
  return rows;
}

// ---- Figure 9: subunits -----------------------------------------------------

std::vector<BenchmarkRow> run_subunits(const BenchmarkConfig& c, const Cell& cell, const GroundTruth& truth) {
  const double length = c.lengths[cell.length_index];
  const Index n_train = training_samples(c, length, 0);
  const Dataset ds = simulate_cell(c, truth, Family::kLNLN, n_train, cell.seed, 0.0, 0.0);
  const DesignMatrix Xtr = ds.X.rows_slice(ds.split.train.begin, ds.split.train.end);
  const Vector ytr = ds.y.segment(ds.split.train.begin, ds.split.train.size());
  const Matrix W_true = truth.W();
  const int k = static_cast<int>(W_true.cols());
  const SplineBasis basis = make_basis(truth.shape(), c.df);
  const SpikeTriggeredEnsemble e = ste(Xtr, ytr);

  std::map<std::string, Matrix> seminmf_w;
  std::vector<BenchmarkRow> rows;
  auto score = [&](BenchmarkRow& row, const Matrix& W) {
    const SubunitMatch m = match_subunits(W, W_true);
    row.mse = m.mean_normalized_mse();
  };
  for (const std::string& m : c.methods) {
    rows.push_back(timed(m, length, cell.seed_index, n_train, [&](BenchmarkRow& row) {
      const bool spline = m.size() > 4 && m.substr(m.size() - 4) == "_spl";
      const std::optional<Matrix> S = spline ? std::optional<Matrix>(basis.full()) : std::nullopt;
      row.extra["spikes"] = static_cast<double>(e.V.rows());
      if (m == "kmeans" || m == "kmeans_spl") {
        score(row, kmeans_subunits(e, k, S, cell.seed).W);
      } else if (m == "seminmf" || m == "seminmf_spl") {
        const FactorizationResult r = seminmf_subunits(e, k, S, cell.seed);
        seminmf_w[m] = r.W;
        score(row, r.W);
      } else if (m == "lnln" || m == "lnln_spl") {
        ModelSpec spec;
        spec.family = Family::kLNLN;
        spec.n_subunits = k;
        spec.filter = Nonlinearity::kExponential;
        spec.output = Nonlinearity::kSoftplus;
        spec.delta_t = ds.delta_t;
        spec.rate_scale = 10.0;
        if (spline) spec.basis = basis;
        const FitData data = make_fit_data(ds.X, ds.y, ds.split, spec.basis);
        // Start from the matching semi-NMF subunits.
        const std::string src = spline ? "seminmf_spl" : "seminmf";
        Matrix W0 = seminmf_w.count(src) ? seminmf_w[src] : seminmf_subunits(e, k, S, cell.seed).W;
        const Coeffs init = coeffs_from_filters(spec, W0, data.train, data.y_train);
        FitOptions opts;
        opts.max_iters = c.max_iters;
        opts.lr = c.lr;
        opts.seed = cell.seed;
        opts.init = init;
        opts.init_noise_sd = 0.0;
        opts.l1_weight = spline ? c.l1_grid.front() : (c.l1_grid_pixel.empty() ? c.l1_grid.front() : c.l1_grid_pixel.front());
        const FitResult r = fit(spec, data, opts);
        row.extra["best_iter"] = r.best_iter;
        score(row, r.filters(spec));
      } else {
        throw InvalidArgument("unknown method '" + m + "' for figure 9");
      }
    }));
  }
  return rows;
}

// ---- Figure 7: diagnostics --------------------------------------------------

std::vector<BenchmarkRow> run_diagnostics(const BenchmarkConfig& c, const Cell& cell, const GroundTruth& truth) {
  const double length = c.lengths[cell.length_index];
  const Index d = static_cast<Index>(truth.filters[0].size());
  const SplineBasis basis = make_basis(truth.shape(), c.df);
  std::vector<BenchmarkRow> rows;
  for (const std::string& scenario : c.methods) {
    double factor = length;
    double sigma = 1.0;
    bool permute = false;
    if (scenario == "C") factor *= 0.5;
    else if (scenario == "D") sigma = 3.0;
    else if (scenario == "E") permute = true;
    else if (scenario != "B") throw InvalidArgument("figure 7 scenarios are B, C, D, E");
    const Index n_train = training_samples(c, factor, d);
    rows.push_back(timed(scenario, length, cell.seed_index, n_train, [&](BenchmarkRow& row) {
      Dataset ds = simulate_cell(c, truth, Family::kLG, n_train, cell.seed, 0.0, sigma);
      if (permute) {
        Rng rng(cell.seed, 5);
        for (Index i = ds.y.size() - 1; i > 0; --i)
          std::swap(ds.y[i], ds.y[static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
      }
      ModelSpec spec;
      spec.family = Family::kLG;
      spec.basis = basis;
      const FitData data = make_fit_data(ds.X, ds.y, ds.split, spec.basis);
      FitOptions opts;
      opts.max_iters = c.max_iters;
      opts.lr = c.lr;
      opts.seed = cell.seed;
      opts.l1_weight = c.l1_grid.empty() ? 0.0 : c.l1_grid.front();
      const FitResult fr = fit(spec, data, opts);
      const auto& tr = ds.split.train;
      const auto& va = ds.split.validation;
      const Report rep = diagnose(spec, fr.coeffs, ds.X.rows_slice(tr.begin, tr.end), ds.y.segment(tr.begin, tr.size()),
                                  ds.X.rows_slice(va.begin, va.end), ds.y.segment(va.begin, va.size()), c.n_perm,
                                  cell.seed);
      row.mse = normalized_mse(rep.w.flat(), truth.w());
      row.extra["wald_T"] = rep.wald_T;
      row.extra["wald_p"] = rep.wald_p;
      row.extra["perm_p"] = rep.perm_p;
      row.extra["train_corr"] = rep.train_corr;
      row.extra["val_corr"] = rep.val_corr;
      row.extra["train_val_gap"] = rep.train_val_gap;
      const Vector width = rep.ci_high.flat() - rep.ci_low.flat();
      row.extra["ci_width_ratio"] = width.maxCoeff() / rep.w.flat().cwiseAbs().maxCoeff();
      row.extra["best_iter"] = fr.best_iter;
    }));
  }
  return rows;
}

}  // namespace

BenchmarkResult run_benchmark(const BenchmarkConfig& config) {
  if (config.lengths.empty() || config.n_seeds < 1) throw InvalidArgument("benchmark needs lengths and seeds");
  if (config.methods.empty()) throw InvalidArgument("benchmark needs at least one method");
  for (double l : config.lengths)
    if (!(l > 0.0)) throw InvalidArgument("benchmark lengths must be positive");

  GroundTruth truth;
  Family family = Family::kLG;
  switch (config.figure) {
    case 4: truth = make_ground_truth(TruthKind::kRank2_2d); break;
    case 5: truth = make_ground_truth(TruthKind::kRank2_2d); family = Family::kLNP; break;
    case 9: truth = make_ground_truth(TruthKind::kDogPair); family = Family::kLNLN; break;
    case 7: truth = make_ground_truth(TruthKind::kGauss3d); break;
    default: throw InvalidArgument("figure must be one of 4, 5, 7, 9");
  }

  double intercept = 0.0;
  if (family == Family::kLNP) {
    SimConfig sc;
    sc.seed = config.seed;
    intercept = calibrate_intercept(truth, config.stimulus, family, config.target_rate_hz, sc);
  }

  std::vector<Cell> cells;
  const Rng root(config.seed, 9);
  for (std::size_t li = 0; li < config.lengths.size(); ++li)
    for (int s = 0; s < config.n_seeds; ++s) {
      // Seeds depend on the seed index only, so every length reuses the same
      // stimulus/response streams.
      Rng r = root.substream(static_cast<std::uint64_t>(s));
      const std::uint64_t hi = r();
      cells.push_back({li, s, (hi << 32) | r()});
    }

  std::vector<std::vector<BenchmarkRow>> per_cell(cells.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < cells.size(); ++i) {
    switch (config.figure) {
      case 4:
      case 5: per_cell[i] = run_single_filter(config, cells[i], truth, intercept); break;
      case 9: per_cell[i] = run_subunits(config, cells[i], truth); break;
      case 7: per_cell[i] = run_diagnostics(config, cells[i], truth); break;
      default: break;
    }
  }

  BenchmarkResult res;
  res.config = config;
  for (auto& v : per_cell)
    for (auto& r : v) {
      if (family == Family::kLNP) r.extra["intercept"] = intercept;
      res.rows.push_back(std::move(r));
    }
  return res;
}

void write_benchmark_csv(const std::filesystem::path& path, const BenchmarkResult& result) {
  std::vector<std::string> keys;
  for (const auto& r : result.rows)
    for (const auto& [k, v] : r.extra)
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  std::sort(keys.begin(), keys.end());

  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "method,length,seed,n_train,mse";
  for (const auto& k : keys) out << ',' << k;
  out << ",error\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : result.rows) {
    out << r.method << ',' << num(r.length) << ',' << r.seed << ',' << r.n_train << ',' << num(r.mse);
    for (const auto& k : keys) {
      const auto it = r.extra.find(k);
      out << ',' << (it == r.extra.end() ? std::string() : num(it->second));
    }
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << ',' << err << '\n';
  }
}

}  // namespace rfkit
