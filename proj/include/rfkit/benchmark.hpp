#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rfkit/simulate.hpp"

namespace rfkit {

struct BenchmarkConfig {
  int figure = 4;  // 4 (LG), 5 (LNP), 9 (LNLN subunits), 7 (diagnostics)
  StimulusKind stimulus = StimulusKind::kWhite;
  // Figure 4 and 7: training samples as a multiple of d. Figures 5 and 9: minutes.
  std::vector<double> lengths;
  int n_seeds = 10;
  std::uint64_t seed = 0;
  std::vector<std::string> methods;  // figure 7: scenarios B, C, D, E
  std::vector<int> df;               // spline df per STRF dimension
  std::vector<double> l1_grid;       // spline L1 grid (ascending)
  std::vector<double> l1_grid_pixel; // non-spline L1 grid (ascending)
  int max_iters = 1500;
  double lr = 0.03;
  double target_rate_hz = 21.0;
  double validation_fraction = 0.25;
  Index min_validation = 300;
  int n_perm = 100;
};

// Defaults reproducing the figure's protocol at desk scale.
BenchmarkConfig figure_preset(int figure);

struct BenchmarkRow {
  std::string method;
  double length = 0.0;
  int seed = 0;
  Index n_train = 0;
  double mse = 0.0;
  double seconds = 0.0;
  std::string error;  // non-empty when the fit failed
  std::map<std::string, double> extra;
};

struct BenchmarkResult {
  BenchmarkConfig config;
  std::vector<BenchmarkRow> rows;  // ordered by (length, seed, method)

  // Mean MSE over seeds for (method, length), ignoring failed rows.
  double mean_mse(const std::string& method, double length) const;
  double mean_extra(const std::string& method, double length, const std::string& key) const;
};

BenchmarkResult run_benchmark(const BenchmarkConfig& config);

void write_benchmark_csv(const std::filesystem::path& path, const BenchmarkResult& result);

}  // namespace rfkit
