// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset (e.g. `rfkit_acceptance 1 2 6`).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "rfkit/benchmark.hpp"
#include "rfkit/cli.hpp"
#include "rfkit/closed_form.hpp"
#include "rfkit/glm.hpp"
#include "rfkit/rng.hpp"
#include "rfkit/simulate.hpp"
#include "rfkit/spline_basis.hpp"
#include "rfkit/subunits.hpp"

namespace fs = std::filesystem;
using namespace rfkit;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string g(double v) { return fmt("%.4g", v); }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---- 1. spline correctness --------------------------------------------------

// Natural cubic spline through (knots, values) by the textbook second-derivative
// system, solved with the Thomas algorithm and evaluated at integer points.
Vector natural_spline_oracle(const Vector& knots, const Vector& values, int num_points) {
  const Index k = knots.size();
  std::vector<double> h(static_cast<std::size_t>(k - 1));
  for (Index i = 0; i + 1 < k; ++i) h[static_cast<std::size_t>(i)] = knots[i + 1] - knots[i];
  const Index m = k - 2;
  std::vector<double> a(static_cast<std::size_t>(m)), b(static_cast<std::size_t>(m)), c(static_cast<std::size_t>(m)),
      r(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    const auto u = static_cast<std::size_t>(i);
    a[u] = h[u] / 6.0;
    b[u] = (h[u] + h[u + 1]) / 3.0;
    c[u] = h[u + 1] / 6.0;
    r[u] = (values[i + 2] - values[i + 1]) / h[u + 1] - (values[i + 1] - values[i]) / h[u];
  }
  for (Index i = 1; i < m; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const double w = a[u] / b[u - 1];
    b[u] -= w * c[u - 1];
    r[u] -= w * r[u - 1];
  }
  std::vector<double> M(static_cast<std::size_t>(k), 0.0);
  for (Index i = m - 1; i >= 0; --i) {
    const auto u = static_cast<std::size_t>(i);
    const double next = i + 1 < m ? M[u + 2] : 0.0;
    M[u + 1] = (r[u] - c[u] * next) / b[u];
  }
  Vector out(num_points);
  for (int p = 0; p < num_points; ++p) {
    const double x = p;
    Index j = 0;
    while (j < k - 2 && x > knots[j + 1]) ++j;
    const auto u = static_cast<std::size_t>(j);
    const double hj = h[u], dl = x - knots[j], dr = knots[j + 1] - x;
    out[p] = M[u] * dr * dr * dr / (6 * hj) + M[u + 1] * dl * dl * dl / (6 * hj) +
             (values[j] / hj - M[u] * hj / 6) * dr + (values[j + 1] / hj - M[u + 1] * hj / 6) * dl;
  }
  return out;
}

Outcome criterion_spline() {
  double knot_err = 0, d2_err = 0, oracle_err = 0;
  for (int n : {15, 30, 40}) {
    for (int df = 3; df <= 15; ++df) {
      const Vector knots = cr_knots(n, df);
      const Matrix at_knots = cr_basis_eval(n, df, knots);
      knot_err = std::max(knot_err, (at_knots - Matrix::Identity(df, df)).cwiseAbs().maxCoeff());
      Vector ends(2);
      ends << knots[0], knots[df - 1];
      d2_err = std::max(d2_err, cr_basis_eval(n, df, ends, 2).cwiseAbs().maxCoeff());
      const Matrix S = cr_basis_1d(n, df);
      for (int i = 0; i < df; ++i) {
        const Vector oracle = natural_spline_oracle(knots, Vector::Unit(df, i), n);
        oracle_err = std::max(oracle_err, (S.col(i) - oracle).cwiseAbs().maxCoeff());
      }
    }
  }
  return {knot_err < 1e-10 && d2_err < 1e-6 && oracle_err < 1e-10,
          "max |S(knots) - I| = " + g(knot_err) + ", max |S''(ends)| = " + g(d2_err) + ", max oracle diff = " +
              g(oracle_err)};
}

// ---- 2. gradient suite --------------------------------------------------------

double cost_of(const ModelSpec& spec, const Coeffs& c, const Features& F, const Vector& y) {
  return cost(spec, c, F, y, 0.0);
}

// Infinity-norm relative error between analytic and central-difference gradients.
double gradient_rel_err(const ModelSpec& spec, const Coeffs& c0, const Features& F, const Vector& y) {
  const Gradient gr = gradient(spec, c0, F, y);
  Vector analytic(gr.B.size() + 1), numeric(gr.B.size() + 1);
  Index idx = 0;
  for (Index j = 0; j < c0.B.cols(); ++j)
    for (Index i = 0; i < c0.B.rows(); ++i, ++idx) {
      const double h = 1e-5 * std::max(1.0, std::abs(c0.B(i, j)));
      Coeffs p = c0, m = c0;
      p.B(i, j) += h;
      m.B(i, j) -= h;
      numeric[idx] = (cost_of(spec, p, F, y) - cost_of(spec, m, F, y)) / (2 * h);
      analytic[idx] = gr.B(i, j);
    }
  const double h = 1e-5 * std::max(1.0, std::abs(c0.intercept));
  Coeffs p = c0, m = c0;
  p.intercept += h;
  m.intercept -= h;
  numeric[idx] = (cost_of(spec, p, F, y) - cost_of(spec, m, F, y)) / (2 * h);
  analytic[idx] = gr.intercept;
  return (analytic - numeric).cwiseAbs().maxCoeff() / std::max(numeric.cwiseAbs().maxCoeff(), 1e-12);
}

Outcome criterion_gradients() {
  double worst = 0.0;
  std::string where;
  int instances = 0;
  for (Family fam : {Family::kLG, Family::kLNP, Family::kLNLN}) {
    for (Nonlinearity f : {Nonlinearity::kExponential, Nonlinearity::kSoftplus}) {
      for (int inst = 0; inst < 20; ++inst) {
        Rng rng(1000 + static_cast<std::uint64_t>(inst), static_cast<std::uint64_t>(fam) * 2 + (f == Nonlinearity::kSoftplus));
        const Index n = 60, p = 8;
        Matrix X(n, p);
        for (Index i = 0; i < X.size(); ++i) X.data()[i] = rng.normal();
        ModelSpec spec;
        spec.family = fam;
        spec.filter = f;
        spec.output = Nonlinearity::kSoftplus;
        spec.n_subunits = fam == Family::kLNLN ? 2 + inst % 2 : 1;
        spec.delta_t = 0.033;
        spec.rate_scale = fam == Family::kLG ? 1.0 : 10.0;
        Coeffs c;
        c.B = Matrix(p, spec.n_subunits);
        for (Index i = 0; i < c.B.size(); ++i) c.B.data()[i] = 0.3 * rng.normal();
        c.intercept = 0.5 * rng.normal();
        Vector y(n);
        for (Index t = 0; t < n; ++t)
          y[t] = fam == Family::kLG ? rng.normal() : static_cast<double>(rng.poisson(0.5 + 2.0 * rng.uniform()));
        const double e = gradient_rel_err(spec, c, Features::dense(X), y);
        ++instances;
        if (e > worst) {
          worst = e;
          where = to_string(fam) + "/" + to_string(f) + " #" + std::to_string(inst);
        }
      }
    }
  }
  return {worst < 1e-5, std::to_string(instances) + " instances, max rel err " + g(worst) + " (" + where + ")"};
}

// ---- 3-5, 7. benchmark reproductions --------------------------------------------

std::string mse_table(const BenchmarkResult& r) {
  std::ostringstream s;
  for (const auto& m : r.config.methods) {
    s << "\n      " << m << ':';
    for (double len : r.config.lengths) s << ' ' << g(r.mean_mse(m, len));
  }
  return s.str();
}

int failures(const BenchmarkResult& r) {
  return static_cast<int>(std::count_if(r.rows.begin(), r.rows.end(), [](const auto& row) { return !row.error.empty(); }));
}

Outcome criterion_figure4() {
  bool ok = true;
  std::string detail, ratios;
  for (StimulusKind stim : {StimulusKind::kWhite, StimulusKind::kPink}) {
    BenchmarkConfig c = figure_preset(4);
    c.stimulus = stim;
    c.lengths = {1, 4, 16};
    c.n_seeds = 10;
    const BenchmarkResult r = run_benchmark(c);
    for (double len : {1.0, 4.0}) {
      const double l1 = r.mean_mse("spl_l1", len), spl = r.mean_mse("spl_wsta", len), w = r.mean_mse("wsta", len);
      const bool cell = l1 <= spl && spl < w;
      ok = ok && cell;
      if (!cell) detail += " ordering broken for " + to_string(stim) + " at factor " + g(len) + ";";
    }
    if (stim == StimulusKind::kPink) {
      for (double len : c.lengths) {
        const double best_spl = std::min(r.mean_mse("spl_wsta", len), r.mean_mse("spl_l1", len));
        const double ratio = r.mean_mse("sta", len) / best_spl;
        ratios += " " + g(ratio);
        ok = ok && ratio > 5.0;
      }
    }
    ok = ok && failures(r) == 0;
    detail += "\n    " + to_string(stim) + " (factor 1, 4, 16):" + mse_table(r);
  }
  return {ok, "pink STA / best SPL at factor 1, 4, 16:" + ratios + ";" + detail};
}

Outcome criterion_figure5() {
  BenchmarkConfig c = figure_preset(5);
  c.lengths = {4};
  c.n_seeds = 10;
  c.methods = {"sta", "lnp_l1", "lnp_spl"};
  const BenchmarkResult r = run_benchmark(c);
  const double spl = r.mean_mse("lnp_spl", 4), l1 = r.mean_mse("lnp_l1", 4), st = r.mean_mse("sta", 4);
  return {spl < l1 && l1 < st && failures(r) == 0,
          "4 min: LNP+SPL " + g(spl) + " < LNP+L1 " + g(l1) + " < STA " + g(st) + ", failures " +
              std::to_string(failures(r))};
}

Outcome criterion_figure9() {
  // The ordering is asserted at 4 minutes (10 seeds); 32 minutes is reported over 5.
  BenchmarkConfig c = figure_preset(9);
  c.lengths = {4};
  c.n_seeds = 10;
  const BenchmarkResult r = run_benchmark(c);
  BenchmarkConfig c32 = c;
  c32.lengths = {32};
  c32.n_seeds = 5;
  const BenchmarkResult r32 = run_benchmark(c32);
  bool ok = failures(r) == 0 && failures(r32) == 0;
  std::string detail;
  for (const std::string m : {"kmeans", "seminmf", "lnln"}) {
    const double plain = r.mean_mse(m, 4), spl = r.mean_mse(m + "_spl", 4);
    ok = ok && spl < plain;
    detail += " " + m + ": spline " + g(spl) + " vs " + g(plain) + ";";
  }
  return {ok, detail + " failures " + std::to_string(failures(r) + failures(r32)) + "\n    4 min:" + mse_table(r) +
                  "\n    32 min:" + mse_table(r32)};
}

Outcome criterion_figure7() {
  BenchmarkConfig c = figure_preset(7);
  c.methods = {"B", "E"};
  const BenchmarkResult r = run_benchmark(c);
  const double len = c.lengths.front();
  const double wald_b = r.mean_extra("B", len, "wald_p"), perm_b = r.mean_extra("B", len, "perm_p");
  const double perm_e = r.mean_extra("E", len, "perm_p"), corr_e = r.mean_extra("E", len, "val_corr");
  const bool ok = failures(r) == 0 && wald_b < 1e-3 && perm_b < 1e-3 && perm_e >= 0.05 && std::abs(corr_e) < 0.1;
  return {ok, "fit at n=d: Wald p " + g(wald_b) + ", perm p " + g(perm_b) + "; permuted response: perm p " + g(perm_e) +
                  ", val corr " + g(corr_e)};
}

// ---- 6. timing --------------------------------------------------------------------

template <class F>
double median_seconds(int reps, F&& f) {
  std::vector<double> t;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = Clock::now();
    f();
    t.push_back(seconds_since(t0));
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

Outcome criterion_timing() {
  const GroundTruth truth = make_ground_truth(TruthKind::kRank2_2d, {30, 30});
  const Index d = 900, n = 4 * d;
  const Tensor stim = gen_stimulus(StimulusKind::kWhite, n, truth.frame_shape(), 11);
  SimConfig sc;
  sc.seed = 11;
  const Vector y = gen_response(truth, stim, Family::kLG, sc);
  const DesignMatrix X = build_design(stim, 30, 0.033);
  const std::vector<DimSpec> dims{{30, 10}, {30, 10}};
  const SplineBasis basis = tensor_basis(dims);
  const Matrix C = asd_cov(std::vector<Index>{30, 30}, 0.0, std::vector<double>{2.0, 2.0}).C;

  volatile double sink = 0;
  const double t_spl = median_seconds(5, [&] { sink = sink + spl_wsta(X, y, basis).w[0]; });
  const double t_wsta = median_seconds(3, [&] { sink = sink + wsta(X.materialize(), y)[0]; });
  const double t_map = median_seconds(3, [&] { sink = sink + map_estimate(X.materialize(), y, C, 1.0).mu[0]; });
  const double r_wsta = t_wsta / t_spl, r_map = t_map / t_spl;
  return {r_wsta >= 5.0 && r_map >= 20.0, "n = " + std::to_string(n) + ": spl_wsta " + fmt("%.4f", t_spl) +
                                               " s, wsta " + fmt("%.4f", t_wsta) + " s (" + g(r_wsta) + "x), MAP " +
                                               fmt("%.4f", t_map) + " s (" + g(r_map) + "x)"};
}

// ---- 8. semi-NMF monotonicity --------------------------------------------------------

Outcome criterion_seminmf() {
  int violations = 0, negative_h = 0, steps = 0;
  double worst = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    Rng rng(500 + static_cast<std::uint64_t>(inst), 3);
    const Index n = 60 + 10 * (inst % 5), d = 12 + inst % 7;
    const int k = 2 + inst % 3;
    SpikeTriggeredEnsemble e;
    e.V = Matrix(n, d);
    for (Index i = 0; i < e.V.size(); ++i) e.V.data()[i] = rng.normal();
    std::optional<Matrix> S;
    if (inst % 2 == 1) S = cr_basis_1d(static_cast<int>(d), 5);

    SemiNmfOptions so;
    so.max_iters = 200;
    so.tol = 0.0;
    const FactorizationResult r = seminmf_subunits(e, k, S, static_cast<std::uint64_t>(inst), so);
    for (std::size_t i = 1; i < r.objective_history.size(); ++i) {
      const double prev = r.objective_history[i - 1], cur = r.objective_history[i];
      const double rise = (cur - prev) / std::max(prev, 1.0);
      worst = std::max(worst, rise);
      violations += rise > 1e-9;
      ++steps;
    }
    // H after every single iteration, by restarting from the previous H.
    SemiNmfOptions one;
    one.max_iters = 1;
    one.tol = 0.0;
    Matrix H = seminmf_subunits(e, k, S, static_cast<std::uint64_t>(inst), one).H;
    for (int it = 0; it < 30; ++it) {
      negative_h += (H.array() < 0.0).any();
      one.init_h = H;
      H = seminmf_subunits(e, k, S, 0, one).H;
    }
    negative_h += (H.array() < 0.0).any();
  }
  return {violations == 0 && negative_h == 0, "50 instances, " + std::to_string(steps) + " steps, " +
                                                  std::to_string(violations) + " increases (largest relative " +
                                                  g(worst) + "), iterates with negative H: " + std::to_string(negative_h)};
}

// ---- 9. rate calibration ---------------------------------------------------------------

Outcome criterion_rate() {
  const GroundTruth truth = make_ground_truth(TruthKind::kRank2_2d);
  SimConfig sc;
  sc.rate_scale = 10.0;
  sc.delta_t = 0.033;
  const double c = calibrate_intercept(truth, StimulusKind::kWhite, Family::kLNP, 21.0, sc);
  const Index frames = frames_for(4 * 60.0, sc.delta_t);
  double acc = 0.0, lo = 1e300, hi = 0.0;
  for (int s = 0; s < 10; ++s) {
    sc.seed = 100 + static_cast<std::uint64_t>(s);
    sc.intercept = c;
    const Tensor stim = gen_stimulus(StimulusKind::kWhite, frames, truth.frame_shape(), sc.seed);
    const double hz = gen_response(truth, stim, Family::kLNP, sc).mean() / sc.delta_t;
    acc += hz;
    lo = std::min(lo, hz);
    hi = std::max(hi, hz);
  }
  const double mean = acc / 10.0;

  // The printed intercept, for the record.
  sc.intercept = 3.5;
  sc.seed = 100;
  const Tensor stim = gen_stimulus(StimulusKind::kWhite, frames, truth.frame_shape(), sc.seed);
  const double literal = gen_rate(truth, stim, Family::kLNP, sc).mean();
  return {std::abs(mean - 21.0) <= 3.0, "calibrated intercept " + g(c) + ": mean rate " + g(mean) + " Hz (seeds " +
                                            g(lo) + ".." + g(hi) + "); intercept 3.5 would give " + g(literal) + " Hz"};
}

// ---- 10. CLI determinism -------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Every file under `a` has a byte-identical twin under `b`, and vice versa.
bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  std::set<fs::path> fa, fb;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) fa.insert(fs::relative(e.path(), a));
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) fb.insert(fs::relative(e.path(), b));
  if (fa != fb) {
    why = "file sets differ";
    return false;
  }
  for (const auto& f : fa)
    if (slurp(a / f) != slurp(b / f)) {
      why = f.string() + " differs";
      return false;
    }
  return true;
}

Outcome criterion_cli() {
  const fs::path root = fs::current_path() / "acceptance_cli";
  fs::remove_all(root);
  fs::create_directories(root);
  auto p = [&](const char* name) { return (root / name).string(); };
  const std::vector<std::vector<std::string>> commands = {
      {"simulate", "--kind", "lnp", "--dims", "10,12", "--minutes", "0.5", "--seed", "7", "--out", p("sim")},
      {"simulate", "--kind", "lnln", "--dims", "10,12", "--minutes", "0.5", "--seed", "3", "--out", p("simln")},
      {"simulate", "--kind", "lg", "--dims", "10,12", "--factor", "4", "--permute-response", "--out", p("simlg")},
      {"fit", "--data", p("sim"), "--family", "lnp", "--spline", "--df", "5,6", "--l1", "1", "--out", p("fit")},
      {"fit", "--data", p("simln"), "--family", "lnln", "--k", "2", "--spline", "--df", "5,6", "--out", p("fitln")},
      {"fit", "--data", p("sim"), "--method", "wsta", "--out", p("wsta")},
      {"fit", "--data", p("sim"), "--method", "asd", "--out", p("asd")},
      {"fit", "--data", p("sim"), "--method", "ald", "--out", p("ald")},
      {"gridsearch-df", "--data", p("sim"), "--df-range", "4:6,4:7", "--out", p("gdf")},
      {"gridsearch-l1", "--data", p("sim"), "--family", "lnp", "--spline", "--df", "5,6", "--alphas", "0.5,1,1.5",
       "--out", p("gl1")},
      {"subunits", "--data", p("simln"), "--method", "seminmf", "--k", "2", "--spline", "--df", "5,6", "--out",
       p("sub")},
      {"subunits", "--data", p("simln"), "--method", "kmeans", "--k", "2", "--seed", "4", "--out", p("km")},
      {"diagnose", "--fit", p("fit"), "--data", p("sim"), "--n-perm", "20", "--seed", "5", "--out", p("diag")},
      {"report", "--run", p("diag")},
      {"benchmark", "--figure", "4", "--lengths", "0.5,1", "--n-seeds", "2", "--out", p("bench")},
  };
  std::ostringstream sink;
  int replayed = 0;
  for (const auto& args : commands) {
    if (cli::run(args, sink, sink) != cli::kOk) return {false, "command failed: " + args[0] + "\n" + sink.str()};
    fs::path out;
    for (std::size_t i = 0; i + 1 < args.size(); ++i)
      if (args[i] == "--out") out = args[i + 1];
    if (args[0] == "report") out = root / "diag" / "report";
    const fs::path copy = out.string() + ".first";
    fs::copy(out, copy, fs::copy_options::recursive);
    if (cli::run({"--config", (out / "manifest.toml").string()}, sink, sink) != cli::kOk) {
      return {false, "replay failed for " + args[0] + "\n" + sink.str()};
    }
    std::string why;
    if (!same_tree(out, copy, why)) return {false, args[0] + " replay differs: " + why};
    ++replayed;
  }
  const int bad_flag = cli::run({"fit", "--no-such-flag"}, sink, sink);
  const bool ok = bad_flag == cli::kUsage;
  return {ok, std::to_string(replayed) + " commands replayed from their manifests byte-identically; unknown flag exit " +
                  std::to_string(bad_flag)};
}

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "spline correctness", 1.0, criterion_spline},
      {2, "gradient suite", 30.0, criterion_gradients},
      {3, "figure 4 ordinal reproduction (LG)", 600.0, criterion_figure4},
      {4, "figure 5 ordinal reproduction (LNP)", 900.0, criterion_figure5},
      {5, "figure 9 ordinal reproduction (subunits)", 1200.0, criterion_figure9},
      {6, "figure 6 timing", 120.0, criterion_timing},
      {7, "figure 7 diagnostics", 600.0, criterion_figure7},
      {8, "semi-NMF monotonicity", 0.0, criterion_seminmf},
      {9, "rate calibration", 0.0, criterion_rate},
      {10, "CLI determinism", 0.0, criterion_cli},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = seconds_since(t0);
    if (c.limit_seconds > 0 && secs >= c.limit_seconds) {
      o.pass = false;
      o.detail += "; runtime limit " + g(c.limit_seconds) + " s exceeded";
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c.id << ": " << c.name << " (" << fmt("%.1f", secs)
              << " s)  " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
