#include "rfkit/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "rfkit/benchmark.hpp"
#include "rfkit/closed_form.hpp"
#include "rfkit/design.hpp"
#include "rfkit/diagnostics.hpp"
#include "rfkit/error.hpp"
#include "rfkit/glm.hpp"
#include "rfkit/kernels.hpp"
#include "rfkit/metrics.hpp"
#include "rfkit/rng.hpp"
#include "rfkit/simulate.hpp"
#include "rfkit/subunits.hpp"
#include "rfkit/svg.hpp"
#include "rfkit/tensor.hpp"

namespace rfkit::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---- small file helpers ----------------------------------------------------

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

Vector to_vector(const Tensor& t) { return t.flat(); }

// Filters (d x k) as a tensor: the STRF itself for k = 1, else stacked along a leading axis.
Tensor filters_tensor(const Matrix& W, const Shape& strf) {
  if (W.cols() == 1) return Tensor::from_vector(W.col(0), strf);
  Shape shape{static_cast<std::size_t>(W.cols())};
  shape.insert(shape.end(), strf.begin(), strf.end());
  const Matrix Wt = W.transpose();
  const RowMatrix rows = Wt;
  return Tensor(shape, std::vector<double>(rows.data(), rows.data() + rows.size()));
}

Shape as_3d(Shape s) {
  if (s.size() == 2) s.push_back(1);
  return s;
}

SplineBasis make_basis(const Shape& strf, const std::vector<int>& df) {
  if (df.size() != strf.size()) {
    throw InvalidArgument("--df needs " + std::to_string(strf.size()) + " values (one per STRF dimension)");
  }
  std::vector<DimSpec> dims;
  for (std::size_t a = 0; a < strf.size(); ++a) dims.push_back({static_cast<int>(strf[a]), df[a]});
  return tensor_basis(dims);
}

// ---- datasets ----------------------------------------------------------------

struct DataArgs {
  std::string dir;
  std::string stimulus;
  std::string response;
  std::optional<int> n_lags;
  std::optional<double> delta_t;
  std::optional<long long> n_train;
  std::optional<long long> n_validation;

  void add(CLI::App* app) {
    app->add_option("--data", dir, "Directory written by `simulate` (stimulus.rft, response.rft, data.json)");
    app->add_option("--stimulus", stimulus, "Stimulus tensor (time, x[, y]); overrides --data");
    app->add_option("--response", response, "Response vector (.rft or .csv); overrides --data");
    app->add_option("--n-lags", n_lags, "STRF length in frames");
    app->add_option("--delta-t", delta_t, "Bin width in seconds");
    app->add_option("--n-train", n_train, "Training samples (from the start of the recording)");
    app->add_option("--n-validation", n_validation, "Validation samples following the training block");
  }
};

struct Dataset {
  Tensor stimulus;
  Vector y;
  DesignMatrix X;
  DataSplit split;
  std::optional<Tensor> truth;
  json meta;

  DesignMatrix train() const { return X.rows_slice(split.train.begin, split.train.end); }
  DesignMatrix validation() const { return X.rows_slice(split.validation.begin, split.validation.end); }
  Vector y_train() const { return y.segment(split.train.begin, split.train.size()); }
  Vector y_validation() const { return y.segment(split.validation.begin, split.validation.size()); }
  Shape strf_shape() const { return X.strf_shape(); }

  // Ground-truth filters as columns (d x k).
  std::optional<Matrix> truth_filters() const {
    if (!truth) return std::nullopt;
    const auto d = static_cast<Index>(shape_product(strf_shape()));
    const auto k = static_cast<Index>(truth->size()) / d;
    if (k * d != static_cast<Index>(truth->size())) throw DataError("truth.rft does not match the STRF shape");
    return Matrix(Eigen::Map<const RowMatrix>(truth->data().data(), k, d).transpose());
  }
};

Tensor read_any(const fs::path& p) { return p.extension() == ".csv" ? read_csv(p) : read_tensor(p); }

Dataset load_dataset(const DataArgs& a) {
  const fs::path dir = a.dir;
  json meta = json::object();
  if (!a.dir.empty() && fs::exists(dir / "data.json")) meta = read_json(dir / "data.json");
  auto source = [&](const std::string& explicit_path, const char* name) {
    if (!explicit_path.empty()) return fs::path(explicit_path);
    if (a.dir.empty()) throw InvalidArgument(std::string("--data or --") + name + " is required");
    return dir / (std::string(name) + ".rft");
  };
  Tensor stimulus = read_any(source(a.stimulus, "stimulus"));
  if (stimulus.rank() < 2 || stimulus.rank() > 3) throw DataError("stimulus must have shape (time, x) or (time, x, y)");
  Vector y = to_vector(read_any(source(a.response, "response")));
  const auto n = static_cast<Index>(stimulus.dim(0));
  if (y.size() != n) {
    throw DataError("response has " + std::to_string(y.size()) + " samples but stimulus has " + std::to_string(n) +
                    " frames");
  }
  auto meta_int = [&](const char* key) -> std::optional<long long> {
    if (meta.contains(key)) return meta[key].get<long long>();
    return std::nullopt;
  };
  const long long n_lags = a.n_lags ? *a.n_lags : meta_int("n_lags").value_or(-1);
  if (n_lags < 1) throw InvalidArgument("--n-lags is required when the data directory has no data.json");
  const double dt = a.delta_t ? *a.delta_t : meta.value("delta_t", 0.033);
  const long long n_val = a.n_validation ? *a.n_validation
                                         : meta_int("n_validation").value_or(std::llround(0.2 * static_cast<double>(n)));
  const long long n_train = a.n_train ? *a.n_train : meta_int("n_train").value_or(n - n_val);
  if (n_train < 1 || n_val < 1 || n_train + n_val > n) throw DataError("train/validation split exceeds the recording");

  std::optional<Tensor> truth;
  if (!a.dir.empty() && fs::exists(dir / "truth.rft")) truth = read_tensor(dir / "truth.rft");
  DesignMatrix X = build_design(stimulus, n_lags, dt);
  DataSplit sp = split(n, n_train, n_val, 0, 0);
  return Dataset{std::move(stimulus), std::move(y), std::move(X), std::move(sp), std::move(truth), std::move(meta)};
}

// ---- model options -----------------------------------------------------------

struct ModelArgs {
  std::string family = "lg";
  std::string filter = "exp";
  std::string output = "softplus";
  bool spline = false;
  std::vector<int> df;
  int k = 2;
  double rate_scale = 1.0;

  void add(CLI::App* app) {
    app->add_option("--family", family, "Encoding model")->check(CLI::IsMember({"lg", "lnp", "lnln"}));
    app->add_option("--filter-nl", filter, "Filter nonlinearity f")->check(CLI::IsMember({"exp", "softplus"}));
    app->add_option("--output-nl", output, "LNLN output nonlinearity g")->check(CLI::IsMember({"exp", "softplus"}));
    app->add_flag("--spline", spline, "Parameterize the filter with a natural cubic spline basis");
    app->add_option("--df", df, "Spline df per STRF dimension (time,x[,y])")->delimiter(',');
    app->add_option("--k", k, "Number of LNLN subunits")->check(CLI::PositiveNumber);
    app->add_option("--rate-scale", rate_scale, "Rate multiplier R")->check(CLI::PositiveNumber);
  }

  ModelSpec spec(const Shape& strf, double delta_t) const {
    ModelSpec s;
    s.family = parse_family(family);
    s.filter = parse_nonlinearity(filter);
    s.output = parse_nonlinearity(output);
    s.n_subunits = s.family == Family::kLNLN ? k : 1;
    s.delta_t = delta_t;
    s.rate_scale = rate_scale;
    if (spline) s.basis = make_basis(strf, df);
    else if (!df.empty()) throw InvalidArgument("--df given without --spline");
    return s;
  }
};

struct FitArgs {
  double l1 = 0.0;
  int max_iters = 1500;
  double lr = 0.03;
  int window = 10;
  std::string prox = "preconditioned";
  std::string init = "auto";

  void add(CLI::App* app) {
    app->add_option("--l1", l1, "L1 weight on the filter coefficients")->check(CLI::NonNegativeNumber);
    app->add_option("--max-iters", max_iters, "Iteration cap")->check(CLI::PositiveNumber);
    app->add_option("--lr", lr, "Adam learning rate")->check(CLI::PositiveNumber);
    app->add_option("--window", window, "Early-stopping window")->check(CLI::PositiveNumber);
    app->add_option("--prox", prox, "Soft-threshold scaling")->check(CLI::IsMember({"preconditioned", "plain"}));
    app->add_option("--init", init, "LNLN starting point")->check(CLI::IsMember({"auto", "lsq", "seminmf"}));
  }

  FitOptions options(std::uint64_t seed) const {
    FitOptions o;
    o.l1_weight = l1;
    o.max_iters = max_iters;
    o.lr = lr;
    o.window = window;
    o.seed = seed;
    o.prox = prox == "plain" ? ProxScaling::kPlain : ProxScaling::kPreconditioned;
    return o;
  }
};

// LNLN starts from semi-NMF subunits of the training spike-triggered ensemble.
Coeffs seminmf_init(const ModelSpec& spec, const Dataset& ds, const FitData& data, std::uint64_t seed) {
  const SpikeTriggeredEnsemble e = ste(ds.train(), ds.y_train());
  std::optional<Matrix> S;
  if (spec.basis) S = spec.basis->full();
  return coeffs_from_filters(spec, seminmf_subunits(e, spec.n_subunits, S, seed).W, data.train, data.y_train);
}

// ---- fit outputs -------------------------------------------------------------

void write_history(const fs::path& path, const History& h) {
  std::string s = "iter,train_cost,validation_cost,train_corr,validation_corr\n";
  for (std::size_t i = 0; i < h.size(); ++i) {
    s += std::to_string(i) + ',' + num(h.train_cost[i]) + ',' + num(h.validation_cost[i]) + ',' +
         num(h.train_corr[i]) + ',' + num(h.validation_corr[i]) + '\n';
  }
  write_text(path, s);
}

History read_history(const fs::path& path) {
  History h;
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) v.push_back(std::strtod(cell.c_str(), nullptr));
    if (v.size() != 5) throw DataError("malformed history row in " + path.string());
    h.train_cost.push_back(v[1]);
    h.validation_cost.push_back(v[2]);
    h.train_corr.push_back(v[3]);
    h.validation_corr.push_back(v[4]);
  }
  return h;
}

json truth_comparison(const Dataset& ds, const Matrix& W) {
  const auto T = ds.truth_filters();
  if (!T) return nullptr;
  if (T->rows() != W.rows()) return nullptr;
  if (T->cols() == 1 && W.cols() == 1) return {{"normalized_mse", normalized_mse(W.col(0), T->col(0))}};
  const SubunitMatch m = match_subunits(W, *T);
  return {{"normalized_mse", m.mean_normalized_mse()},
          {"assignment", m.assignment},
          {"per_subunit", m.normalized_mse},
          {"greedy", m.greedy}};
}

void write_fit(const fs::path& out, const ModelSpec& spec, const Coeffs& c, const Matrix& W, const History* history,
               json info, const Dataset& ds, std::ostream& log) {
  write_tensor(out / "coeffs.rft", Tensor::from_matrix(c.B, {"coeff", "subunit"}));
  write_tensor(out / "strf.rft", filters_tensor(W, ds.strf_shape()));
  if (history) write_history(out / "history.csv", *history);

  const double train_corr = correlation_or_zero(predict(spec, c, ds.train()), ds.y_train());
  const double val_corr = correlation_or_zero(predict(spec, c, ds.validation()), ds.y_validation());
  std::vector<int> df;
  if (spec.basis) {
    for (const auto& d : spec.basis->dims()) df.push_back(d.df);
  }
  info["family"] = to_string(spec.family);
  info["filter_nl"] = to_string(spec.filter);
  info["output_nl"] = to_string(spec.output);
  info["n_subunits"] = spec.n_subunits;
  info["spline"] = spec.basis.has_value();
  info["df"] = df;
  info["rate_scale"] = spec.rate_scale;
  info["delta_t"] = spec.delta_t;
  info["n_lags"] = ds.X.n_lags();
  info["strf_shape"] = ds.strf_shape();
  info["intercept"] = c.intercept;
  info["n_train"] = ds.split.train.size();
  info["n_validation"] = ds.split.validation.size();
  info["train_corr"] = train_corr;
  info["validation_corr"] = val_corr;
  info["truth"] = truth_comparison(ds, W);
  write_json(out / "fit.json", info);
  log << "fit: " << info.value("method", std::string("glm")) << " family=" << to_string(spec.family)
      << " train_corr=" << short_num(train_corr) << " validation_corr=" << short_num(val_corr);
  if (!info["truth"].is_null()) log << " normalized_mse=" << short_num(info["truth"]["normalized_mse"].get<double>());
  log << '\n';
}

// Closed-form estimate scored under an LG model with a least-squares intercept.
void fit_closed_form(const fs::path& out, const std::string& method, const ModelArgs& m, const Dataset& ds,
                     std::ostream& log) {
  const DesignMatrix Xtr = ds.train();
  const Vector ytr = ds.y_train();
  ModelSpec spec;
  spec.family = Family::kLG;
  spec.delta_t = ds.X.delta_t();
  json info = {{"method", method}};
  Vector b;
  if (method == "sta") {
    const bool counts = ytr.minCoeff() >= 0.0 && ytr.sum() > 0.0;
    b = sta(Xtr, ytr, counts ? StaNormalization::kSpikeCount : StaNormalization::kSamples);
  } else if (method == "wsta") {
    b = wsta(Xtr.materialize(), ytr);
  } else if (method == "spl-wsta") {
    if (!m.spline && m.df.empty()) throw InvalidArgument("spl-wsta needs --df");
    spec.basis = make_basis(ds.strf_shape(), m.df);
    b = spl_wsta(Xtr, ytr, *spec.basis).b;
  } else {
    std::vector<Index> dims;
    for (auto s : ds.strf_shape()) dims.push_back(static_cast<Index>(s));
    const EvidenceFit ef =
        evidence_optimize(Xtr.materialize(), ytr, method == "asd" ? PriorKind::kASD : PriorKind::kALD, dims);
    b = ef.state.mu;
    info["evidence"] = {{"params", ef.params},
                        {"cost", ef.cost},
                        {"evaluations", ef.evaluations},
                        {"converged", ef.converged},
                        {"sigma2", ef.state.sigma2}};
  }
  Coeffs c;
  c.B = b;
  const Features F = Features::build(Xtr, spec.basis);
  c.intercept = calibrate_model_intercept(spec, c.B, F, ytr);
  const Matrix W = spec.basis ? Matrix(spec.basis->full() * b) : Matrix(b);
  write_fit(out, spec, c, W, nullptr, info, ds, log);
}

// ---- plots and summaries -------------------------------------------------------

void write_diagnostic_plots(const fs::path& out, const Tensor& w, const Tensor& lo, const Tensor& hi,
                            const std::vector<double>& perm_corrs, double val_corr, const History* history) {
  const Shape s3 = as_3d(w.shape());
  const SvdSplit sv = svd_split(w.reshaped(s3));
  const Index nt = static_cast<Index>(s3[0]);
  const Index px = sv.pixel_x * static_cast<Index>(s3[2]) + sv.pixel_y;
  const Index npix = static_cast<Index>(shape_product(s3)) / nt;
  svg::Series trace{"estimate", {}, {}, {}, {}};
  for (Index j = 0; j < nt; ++j) {
    const auto idx = static_cast<std::size_t>(j * npix + px);
    trace.x.push_back(static_cast<double>(nt - 1 - j));
    trace.y.push_back(w[idx]);
    trace.low.push_back(lo[idx]);
    trace.high.push_back(hi[idx]);
  }
  svg::LinePlot temporal{"Temporal profile at pixel (" + std::to_string(sv.pixel_x) + ", " +
                             std::to_string(sv.pixel_y) + ") with 95% CI",
                         "lag (frames)", "weight", {trace}, false, false, std::nullopt};
  svg::write(out / "temporal.svg", svg::render(temporal));
  svg::write(out / "spatial.svg",
             svg::heatmap("Spatial frame at lag " + std::to_string(nt - 1 - sv.time_index), sv.spatial));
  if (!perm_corrs.empty()) {
    svg::write(out / "permutation.svg",
               svg::histogram("Permuted validation correlations (red: unpermuted)", perm_corrs, 20, val_corr));
  }
  if (history && history->size() > 0) {
    svg::Series tr{"train", {}, history->train_cost, {}, {}};
    svg::Series va{"validation", {}, history->validation_cost, {}, {}};
    for (std::size_t i = 0; i < history->size(); ++i) {
      tr.x.push_back(static_cast<double>(i));
      va.x.push_back(static_cast<double>(i));
    }
    svg::write(out / "cost.svg", svg::render({"Cost per iteration", "iteration", "cost", {tr, va}, false, false, std::nullopt}));
  }
}

std::string summary_text(const json& r) {
  std::ostringstream s;
  auto row = [&s](const std::string& label) -> std::ostream& {
    s << label << std::string(label.size() < 24 ? 24 - label.size() : 1, ' ');
    return s;
  };
  const double perm_p = r.at("perm_p").get<double>();
  const auto shape = r.at("strf_shape").get<std::vector<std::size_t>>();
  row("STRF shape:");
  for (std::size_t i = 0; i < shape.size(); ++i) s << (i ? " x " : "") << shape[i];
  s << '\n';
  row("model:") << r.at("family").get<std::string>() << (r.value("spline", false) ? " (spline)" : "") << '\n';
  row("Wald statistic:") << short_num(r.at("wald_T").get<double>()) << " (p = " << short_num(r.at("wald_p").get<double>())
                         << ")\n";
  row("permutation test:") << "p = " << short_num(perm_p) << " over " << r.at("perm_corrs").size() << " shuffles\n";
  row("train correlation:") << short_num(r.at("train_corr").get<double>()) << '\n';
  row("validation correlation:") << short_num(r.at("val_corr").get<double>()) << '\n';
  row("train/val gap:") << short_num(r.at("train_val_gap").get<double>()) << '\n';
  row("temporal extremum:") << "lag " << r.at("extremum_lag").get<long long>() << ", pixel ("
                            << r.at("extremum_pixel")[0].get<long long>() << ", "
                            << r.at("extremum_pixel")[1].get<long long>() << ")\n";
  if (r.contains("truth") && !r["truth"].is_null())
    row("normalized MSE:") << short_num(r["truth"]["normalized_mse"].get<double>()) << '\n';
  row("verdict:") << (perm_p < 0.05 ? "prediction beats shuffled stimulus (significant)"
                                    : "chance level (perm p >= 0.05)")
                  << '\n';
  for (const auto& w : r.at("warnings")) s << "warning: " << w.get<std::string>() << '\n';
  return s.str();
}

// ---- subcommands -----------------------------------------------------------------

struct SimulateArgs {
  std::string kind = "lnp";
  std::string truth;
  std::vector<std::size_t> dims;
  std::string stimulus = "white";
  std::optional<double> minutes;
  std::optional<double> factor;
  std::optional<double> intercept;
  double rate_hz = 21.0;
  double rate_scale = 10.0;
  double sigma = 1.0;
  double delta_t = 0.033;
  double validation_fraction = 0.25;
  long long min_validation = 300;
  bool permute = false;
};

void cmd_simulate(const SimulateArgs& a, std::uint64_t seed, const fs::path& out, std::ostream& log) {
  const Family family = parse_family(a.kind);
  const std::string truth_name = !a.truth.empty() ? a.truth : (family == Family::kLNLN ? "dog_pair" : "rank2_2d");
  const GroundTruth truth = make_ground_truth(parse_truth_kind(truth_name), a.dims);
  const auto d = static_cast<double>(truth.filters[0].size());
  if (a.minutes.has_value() == a.factor.has_value()) throw InvalidArgument("give exactly one of --minutes or --factor");
  const Index n_train = a.minutes ? frames_for(*a.minutes * 60.0, a.delta_t) : std::llround(*a.factor * d);
  if (n_train < 1) throw InvalidArgument("training length must be positive");
  const Index n_val = std::max<Index>(a.min_validation, std::llround(a.validation_fraction * static_cast<double>(n_train)));

  SimConfig sc;
  sc.delta_t = a.delta_t;
  sc.rate_scale = a.rate_scale;
  sc.sigma = a.sigma;
  sc.seed = seed;
  const StimulusKind sk = parse_stimulus_kind(a.stimulus);
  if (a.intercept) sc.intercept = *a.intercept;
  else if (family == Family::kLNP) sc.intercept = calibrate_intercept(truth, sk, family, a.rate_hz, sc);

  const Tensor stim = gen_stimulus(sk, n_train + n_val, truth.frame_shape(), seed);
  Vector y = gen_response(truth, stim, family, sc);
  if (a.permute) {
    Rng rng(seed, 5);
    for (Index i = y.size() - 1; i > 0; --i) std::swap(y[i], y[static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)))]);
  }
  write_tensor(out / "stimulus.rft", stim);
  write_tensor(out / "response.rft", Tensor::from_vector(y, {static_cast<std::size_t>(y.size())}));
  write_tensor(out / "truth.rft", filters_tensor(truth.W(), truth.shape()));

  json meta = {{"family", a.kind},
               {"truth", truth_name},
               {"truth_params", truth.params},
               {"stimulus", a.stimulus},
               {"n_lags", truth.n_lags()},
               {"strf_shape", truth.shape()},
               {"delta_t", a.delta_t},
               {"n_train", n_train},
               {"n_validation", n_val},
               {"intercept", sc.intercept},
               {"rate_scale", sc.rate_scale},
               {"sigma", sc.sigma},
               {"permuted_response", a.permute},
               {"seed", seed}};
  if (family != Family::kLG) meta["mean_rate_hz"] = y.mean() / a.delta_t;
  write_json(out / "data.json", meta);
  log << "simulate: " << truth_name << ' ' << a.kind << ", " << n_train << " train + " << n_val << " validation frames";
  if (family != Family::kLG) log << ", mean rate " << short_num(y.mean() / a.delta_t) << " Hz";
  log << '\n';
}

void cmd_fit(const std::string& method, const DataArgs& da, const ModelArgs& ma, const FitArgs& fa, std::uint64_t seed,
             const fs::path& out, std::ostream& log) {
  const Dataset ds = load_dataset(da);
  if (method != "glm") {
    fit_closed_form(out, method, ma, ds, log);
    return;
  }
  const ModelSpec spec = ma.spec(ds.strf_shape(), ds.X.delta_t());
  const FitData data = make_fit_data(ds.X, ds.y, ds.split, spec.basis);
  FitOptions opts = fa.options(seed);
  opts.l1_weight = fa.l1;
  const bool semi = fa.init == "seminmf" || (fa.init == "auto" && spec.family == Family::kLNLN);
  if (semi) {
    if (spec.family != Family::kLNLN) throw InvalidArgument("--init seminmf applies to LNLN fits");
    opts.init = seminmf_init(spec, ds, data, seed);
    opts.init_noise_sd = 0.0;
  }
  const FitResult r = fit(spec, data, opts);
  json info = {{"method", "glm"},
               {"l1", fa.l1},
               {"best_iter", r.best_iter},
               {"iterations", r.iterations},
               {"stopped_by", to_string(r.stopped_by)},
               {"init", semi ? "seminmf" : "lsq"}};
  write_fit(out, spec, r.coeffs, r.filters(spec), &r.history, info, ds, log);
}

std::vector<int> parse_range(const std::string& s) {
  std::vector<int> parts;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ':')) {
    try {
      parts.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw InvalidArgument("bad df range '" + s + "' (expected a, a:b or a:b:step)");
    }
  }
  if (parts.empty() || parts.size() > 3) throw InvalidArgument("bad df range '" + s + "'");
  const int lo = parts[0], hi = parts.size() > 1 ? parts[1] : parts[0], step = parts.size() > 2 ? parts[2] : 1;
  if (step < 1 || hi < lo) throw InvalidArgument("bad df range '" + s + "'");
  std::vector<int> v;
  for (int x = lo; x <= hi; x += step) v.push_back(x);
  return v;
}

void cmd_gridsearch_df(const DataArgs& da, const std::vector<std::string>& ranges, const fs::path& out, std::ostream& log) {
  const Dataset ds = load_dataset(da);
  const Shape strf = ds.strf_shape();
  if (ranges.size() != strf.size()) {
    throw InvalidArgument("--df-range needs " + std::to_string(strf.size()) + " ranges (one per STRF dimension)");
  }
  std::vector<std::vector<int>> grid;
  for (const auto& r : ranges) grid.push_back(parse_range(r));
  const DfGridResult g = gridsearch_df(ds.train(), ds.y_train(), ds.validation(), ds.y_validation(), grid);

  std::string csv;
  for (std::size_t a = 0; a < strf.size(); ++a) csv += "df_" + std::to_string(a) + ',';
  csv += "validation_corr\n";
  for (std::size_t i = 0; i < g.cells.size(); ++i) {
    for (int v : g.cells[i]) csv += std::to_string(v) + ',';
    csv += num(g.scores[i]) + '\n';
  }
  write_text(out / "df_grid.csv", csv);
  write_json(out / "gridsearch.json", {{"best_df", g.best_df()}, {"best_score", g.scores[g.best]}, {"n_cells", g.cells.size()}});

  ModelArgs best;
  best.spline = true;
  best.df = g.best_df();
  fit_closed_form(out, "spl-wsta", best, ds, log);
  log << "gridsearch-df: best df";
  for (int v : g.best_df()) log << ' ' << v;
  log << " (validation corr " << short_num(g.scores[g.best]) << ")\n";
}

void cmd_gridsearch_l1(const DataArgs& da, const ModelArgs& ma, const FitArgs& fa, const std::vector<double>& alphas,
                       std::uint64_t seed, const fs::path& out, std::ostream& log) {
  const Dataset ds = load_dataset(da);
  const ModelSpec spec = ma.spec(ds.strf_shape(), ds.X.delta_t());
  const FitData data = make_fit_data(ds.X, ds.y, ds.split, spec.basis);
  FitOptions opts = fa.options(seed);
  if (spec.family == Family::kLNLN && fa.init != "lsq") {
    opts.init = seminmf_init(spec, ds, data, seed);
    opts.init_noise_sd = 0.0;
  }
  const L1GridResult g = gridsearch_l1(spec, data, opts, alphas);
  std::string csv = "alpha,validation_corr\n";
  for (std::size_t i = 0; i < g.alphas.size(); ++i) csv += num(g.alphas[i]) + ',' + num(g.scores[i]) + '\n';
  write_text(out / "l1_grid.csv", csv);
  const FitResult& r = g.fits[g.best];
  json info = {{"method", "glm"},
               {"l1", g.best_alpha()},
               {"alphas_fitted", g.alphas},
               {"best_iter", r.best_iter},
               {"iterations", r.iterations},
               {"stopped_by", to_string(r.stopped_by)}};
  write_fit(out, spec, r.coeffs, r.filters(spec), &r.history, info, ds, log);
  log << "gridsearch-l1: best alpha " << num(g.best_alpha()) << " of " << g.alphas.size() << " fitted\n";
}

struct SubunitArgs {
  std::string method = "seminmf";
  int k = 2;
  bool spline = false;
  std::vector<int> df;
  int max_iters = 500;
  double tol = 1e-6;
};

void cmd_subunits(const DataArgs& da, const SubunitArgs& a, std::uint64_t seed, const fs::path& out, std::ostream& log) {
  const Dataset ds = load_dataset(da);
  const Shape strf = ds.strf_shape();
  std::optional<Matrix> S;
  if (a.spline) S = make_basis(strf, a.df).full();
  else if (!a.df.empty()) throw InvalidArgument("--df given without --spline");
  const SpikeTriggeredEnsemble e = ste(ds.train(), ds.y_train());
  SemiNmfOptions so;
  so.max_iters = a.max_iters;
  so.tol = a.tol;
  const FactorizationResult r =
      a.method == "kmeans" ? kmeans_subunits(e, a.k, S, seed, a.max_iters) : seminmf_subunits(e, a.k, S, seed, so);

  write_tensor(out / "subunits.rft", filters_tensor(r.W, strf));
  if (r.B) write_tensor(out / "coeffs.rft", Tensor::from_matrix(*r.B, {"coeff", "subunit"}));
  std::string csv = "iter,objective\n";
  for (std::size_t i = 0; i < r.objective_history.size(); ++i)
    csv += std::to_string(i) + ',' + num(r.objective_history[i]) + '\n';
  write_text(out / "objective.csv", csv);
  json info = {{"method", a.method},
               {"k", a.k},
               {"spline", a.spline},
               {"df", a.df},
               {"n_spikes", e.V.rows()},
               {"iterations", r.iterations},
               {"converged", r.converged},
               {"truth", truth_comparison(ds, r.W)}};
  write_json(out / "subunits.json", info);
  for (Index i = 0; i < r.W.cols(); ++i) {
    const Vector wi = r.W.col(i);
    if (wi.cwiseAbs().maxCoeff() == 0.0) continue;
    const SvdSplit sv = svd_split(Tensor::from_vector(wi, as_3d(strf)));
    svg::write(out / ("subunit_" + std::to_string(i) + ".svg"),
               svg::heatmap("Subunit " + std::to_string(i) + " at lag " + std::to_string(strf[0] - 1 - sv.time_index),
                            sv.spatial));
  }
  log << "subunits: " << a.method << (a.spline ? " (spline)" : "") << ", " << e.V.rows() << " spikes, "
      << r.iterations << " iterations";
  if (!info["truth"].is_null()) log << ", normalized MSE " << short_num(info["truth"]["normalized_mse"].get<double>());
  log << '\n';
}

void cmd_diagnose(const std::string& fit_path, const DataArgs& da, int n_perm, std::uint64_t seed, const fs::path& out,
                  std::ostream& log) {
  fs::path fit_dir = fit_path;
  if (fs::is_regular_file(fit_dir)) fit_dir = fit_dir.parent_path();
  if (!fs::exists(fit_dir / "fit.json")) throw DataError("no fit.json in " + fit_dir.string());
  const json fj = read_json(fit_dir / "fit.json");
  const Dataset ds = load_dataset(da);

  ModelArgs ma;
  ma.family = fj.at("family").get<std::string>();
  ma.filter = fj.at("filter_nl").get<std::string>();
  ma.output = fj.at("output_nl").get<std::string>();
  ma.spline = fj.at("spline").get<bool>();
  ma.df = fj.at("df").get<std::vector<int>>();
  ma.rate_scale = fj.at("rate_scale").get<double>();
  const ModelSpec spec = ma.spec(ds.strf_shape(), ds.X.delta_t());
  const Tensor ct = read_tensor(fit_dir / "coeffs.rft");
  if (ct.rank() != 2) throw DataError("coeffs.rft must be a (coeff, subunit) matrix");
  Coeffs c;
  c.B = Matrix(ct.unfold());
  c.intercept = fj.at("intercept").get<double>();

  const Report rep = diagnose(spec, c, ds.train(), ds.y_train(), ds.validation(), ds.y_validation(), n_perm, seed);
  write_tensor(out / "strf.rft", rep.w);
  write_tensor(out / "ci_low.rft", rep.ci_low);
  write_tensor(out / "ci_high.rft", rep.ci_high);
  std::optional<History> history;
  if (fs::exists(fit_dir / "history.csv")) {
    history = read_history(fit_dir / "history.csv");
    write_history(out / "history.csv", *history);
  }
  const SvdSplit sv = svd_split(rep.w.reshaped(as_3d(rep.w.shape())));
  json r = {{"family", to_string(spec.family)},
            {"spline", spec.basis.has_value()},
            {"strf_shape", rep.w.shape()},
            {"wald_T", rep.wald_T},
            {"wald_p", rep.wald_p},
            {"perm_p", rep.perm_p},
            {"perm_corrs", rep.perm_corrs},
            {"train_corr", rep.train_corr},
            {"val_corr", rep.val_corr},
            {"train_val_gap", rep.train_val_gap},
            {"extremum_lag", static_cast<long long>(ds.X.n_lags() - 1 - sv.time_index)},
            {"extremum_pixel", {sv.pixel_x, sv.pixel_y}},
            {"n_perm", n_perm},
            {"warnings", rep.warnings},
            {"truth", truth_comparison(ds, Matrix(rep.w.flat()))}};
  write_json(out / "report.json", r);
  write_diagnostic_plots(out, rep.w, rep.ci_low, rep.ci_high, rep.perm_corrs, rep.val_corr,
                         history ? &*history : nullptr);
  log << summary_text(r);
}

void cmd_report(const fs::path& run, const fs::path& out, std::ostream& log) {
  if (!fs::exists(run / "report.json")) throw DataError("no report.json in " + run.string() + " (run diagnose first)");
  const json r = read_json(run / "report.json");
  const Tensor w = read_tensor(run / "strf.rft");
  const Tensor lo = read_tensor(run / "ci_low.rft");
  const Tensor hi = read_tensor(run / "ci_high.rft");
  std::optional<History> history;
  if (fs::exists(run / "history.csv")) history = read_history(run / "history.csv");
  const std::string text = summary_text(r);
  write_text(out / "summary.txt", text);
  write_diagnostic_plots(out, w, lo, hi, r.at("perm_corrs").get<std::vector<double>>(), r.at("val_corr").get<double>(),
                         history ? &*history : nullptr);
  log << text;
}

struct BenchArgs {
  int figure = 4;
  std::string stimulus = "white";
  std::vector<double> lengths;
  std::optional<int> n_seeds;
  std::vector<std::string> methods;
  std::vector<int> df;
  std::vector<double> l1_grid;
  std::vector<double> l1_grid_pixel;
  std::optional<int> max_iters;
  std::optional<double> lr;
  std::optional<int> n_perm;
};

void cmd_benchmark(const BenchArgs& a, std::uint64_t seed, const fs::path& out, std::ostream& log) {
  BenchmarkConfig c = figure_preset(a.figure);
  c.stimulus = parse_stimulus_kind(a.stimulus);
  c.seed = seed;
  if (!a.lengths.empty()) c.lengths = a.lengths;
  if (a.n_seeds) c.n_seeds = *a.n_seeds;
  if (!a.methods.empty()) c.methods = a.methods;
  if (!a.df.empty()) c.df = a.df;
  if (!a.l1_grid.empty()) c.l1_grid = a.l1_grid;
  if (!a.l1_grid_pixel.empty()) c.l1_grid_pixel = a.l1_grid_pixel;
  if (a.max_iters) c.max_iters = *a.max_iters;
  if (a.lr) c.lr = *a.lr;
  if (a.n_perm) c.n_perm = *a.n_perm;

  const BenchmarkResult res = run_benchmark(c);
  write_benchmark_csv(out / "benchmark.csv", res);

  json mean = json::object();
  json extras = json::object();
  svg::LinePlot plot{"Figure " + std::to_string(c.figure) + " (" + a.stimulus + " noise)",
                     c.figure == 4 || c.figure == 7 ? "training samples / parameters" : "recording length (minutes)",
                     "normalized MSE", {}, true, true, std::nullopt};
  std::size_t failures = 0;
  for (const auto& r : res.rows) failures += r.error.empty() ? 0 : 1;
  for (const auto& m : c.methods) {
    svg::Series s{m, {}, {}, {}, {}};
    std::set<std::string> keys;
    for (const auto& r : res.rows)
      if (r.method == m)
        for (const auto& [k, v] : r.extra) keys.insert(k);
    for (double len : c.lengths) {
      const double v = res.mean_mse(m, len);
      mean[m].push_back(finite_or_null(v));
      s.x.push_back(len);
      s.y.push_back(v);
      for (const auto& k : keys) extras[m][k].push_back(finite_or_null(res.mean_extra(m, len, k)));
    }
    plot.series.push_back(std::move(s));
  }
  svg::write(out / "mse.svg", svg::render(plot));
  write_json(out / "summary.json", {{"figure", c.figure},
                                    {"stimulus", a.stimulus},
                                    {"lengths", c.lengths},
                                    {"n_seeds", c.n_seeds},
                                    {"methods", c.methods},
                                    {"rows", res.rows.size()},
                                    {"failures", failures},
                                    {"mean_mse", mean},
                                    {"mean_extra", extras}});
  log << "benchmark: figure " << c.figure << ", " << res.rows.size() << " rows, " << failures << " failures\n";
  for (const auto& m : c.methods) {
    log << "  " << m << ':';
    for (double len : c.lengths) log << ' ' << short_num(res.mean_mse(m, len));
    log << '\n';
  }
}

std::string manifest(CLI::App* sub) {
  std::string s = "# rfkit " RFKIT_VERSION "\n";
  s += "# replay: rfkit --config manifest.toml\n";
  s += "[" + sub->get_name() + "]\n";
  // Unset options come out as key="", which CLI11 would read back as one empty
  // element for vector options; leaving them out restores the default instead.
  std::istringstream lines(sub->config_to_str(true, false));
  for (std::string line; std::getline(lines, line);)
    if (line.size() < 3 || line.compare(line.size() - 3, 3, "=\"\"") != 0) s += line + '\n';
  return s;
}

void apply_thread_limit() {
  if (const char* env = std::getenv("RFKIT_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || n < 1) throw InvalidArgument("RFKIT_THREADS must be a positive integer");
    kernels::set_threads(static_cast<int>(n));
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spline-based receptive field estimation", "rfkit"};
  app.set_version_flag("--version", RFKIT_VERSION);
  app.set_config("--config", "", "TOML config (e.g. a manifest.toml); flags override its keys");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out_dir;
  auto common = [&](CLI::App* sub, bool need_out = true) {
    sub->configurable();
    auto* o = sub->add_option("--out", out_dir, "Output directory");
    if (need_out) o->required();
    sub->add_option("--seed", seed, "Random seed");
  };

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate a ground-truth STRF, stimulus and response");
  common(c_sim);
  c_sim->add_option("--kind", sim.kind, "Response model")->check(CLI::IsMember({"lg", "lnp", "lnln"}));
  c_sim->add_option("--truth", sim.truth, "Ground truth (default: rank2_2d, dog_pair for lnln)")
      ->check(CLI::IsMember({"", "rank2_2d", "dog_pair", "gauss3d"}));
  c_sim->add_option("--dims", sim.dims, "Ground-truth shape (time,x[,y])")->delimiter(',');
  c_sim->add_option("--stimulus", sim.stimulus, "Stimulus noise")->check(CLI::IsMember({"white", "pink", "binary"}));
  c_sim->add_option("--minutes", sim.minutes, "Training length in minutes");
  c_sim->add_option("--factor", sim.factor, "Training length as a multiple of the STRF size");
  c_sim->add_option("--intercept", sim.intercept, "Intercept (default: calibrated to --rate-hz for lnp, else 0)");
  c_sim->add_option("--rate-hz", sim.rate_hz, "Target mean rate for intercept calibration");
  c_sim->add_option("--rate-scale", sim.rate_scale, "Rate multiplier R");
  c_sim->add_option("--sigma", sim.sigma, "LG noise sd");
  c_sim->add_option("--delta-t", sim.delta_t, "Bin width in seconds");
  c_sim->add_option("--validation-fraction", sim.validation_fraction, "Validation length relative to training");
  c_sim->add_option("--min-validation", sim.min_validation, "Minimum validation samples");
  c_sim->add_flag("--permute-response", sim.permute, "Shuffle the response (chance-level control)");

  DataArgs data;
  ModelArgs model;
  FitArgs fitargs;
  std::string method = "glm";
  auto* c_fit = app.add_subcommand("fit", "Fit an STRF");
  common(c_fit);
  data.add(c_fit);
  model.add(c_fit);
  fitargs.add(c_fit);
  c_fit->add_option("--method", method, "glm (iterative) or a closed-form estimator")
      ->check(CLI::IsMember({"glm", "sta", "wsta", "spl-wsta", "asd", "ald"}));

  std::vector<std::string> df_ranges;
  auto* c_gdf = app.add_subcommand("gridsearch-df", "Search spline df by validation correlation");
  common(c_gdf);
  data.add(c_gdf);
  c_gdf->add_option("--df-range", df_ranges, "Per-dimension ranges, e.g. 6:12,6:12")->delimiter(',')->required();

  std::vector<double> alphas;
  auto* c_gl1 = app.add_subcommand("gridsearch-l1", "Search the L1 weight by validation correlation");
  common(c_gl1);
  data.add(c_gl1);
  model.add(c_gl1);
  fitargs.add(c_gl1);
  c_gl1->add_option("--alphas", alphas, "Ascending L1 weights")->delimiter(',')->required();

  SubunitArgs sub;
  auto* c_sub = app.add_subcommand("subunits", "Spike-triggered clustering into subunits");
  common(c_sub);
  data.add(c_sub);
  c_sub->add_option("--method", sub.method, "Factorization")->check(CLI::IsMember({"kmeans", "seminmf"}));
  c_sub->add_option("--k", sub.k, "Number of subunits")->check(CLI::PositiveNumber);
  c_sub->add_flag("--spline", sub.spline, "Project subunits onto the spline basis");
  c_sub->add_option("--df", sub.df, "Spline df per STRF dimension")->delimiter(',');
  c_sub->add_option("--max-iters", sub.max_iters, "Iteration cap")->check(CLI::PositiveNumber);
  c_sub->add_option("--tol", sub.tol, "semi-NMF relative objective tolerance");

  std::string fit_path;
  int n_perm = 100;
  auto* c_diag = app.add_subcommand("diagnose", "Confidence intervals, Wald and permutation tests for a fit");
  common(c_diag);
  data.add(c_diag);
  c_diag->add_option("--fit", fit_path, "Fit output directory (or a file inside it)")->required();
  c_diag->add_option("--n-perm", n_perm, "Permutations")->check(CLI::PositiveNumber);

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("benchmark", "Simulation benchmark reproducing a figure protocol");
  common(c_bench);
  c_bench->add_option("--figure", bench.figure, "Protocol")->check(CLI::IsMember({4, 5, 7, 9}))->required();
  c_bench->add_option("--stimulus", bench.stimulus, "Stimulus noise")->check(CLI::IsMember({"white", "pink", "binary"}));
  c_bench->add_option("--lengths", bench.lengths, "Training lengths")->delimiter(',');
  c_bench->add_option("--n-seeds", bench.n_seeds, "Seeds per length");
  c_bench->add_option("--methods", bench.methods, "Methods (figure 7: scenarios B,C,D,E)")->delimiter(',');
  c_bench->add_option("--df", bench.df, "Spline df per STRF dimension")->delimiter(',');
  c_bench->add_option("--l1-grid", bench.l1_grid, "Spline L1 grid")->delimiter(',');
  c_bench->add_option("--l1-grid-pixel", bench.l1_grid_pixel, "Pixel-basis L1 grid")->delimiter(',');
  c_bench->add_option("--max-iters", bench.max_iters, "Iteration cap per fit");
  c_bench->add_option("--lr", bench.lr, "Adam learning rate (default: the figure preset)");
  c_bench->add_option("--n-perm", bench.n_perm, "Permutations (figure 7)");

  std::string run_dir;
  auto* c_rep = app.add_subcommand("report", "Summary and plots for a diagnose run");
  common(c_rep, false);
  c_rep->add_option("--run", run_dir, "diagnose output directory")->required();

  for (CLI::App* sc : app.get_subcommands([](CLI::App*) { return true; }))
    for (CLI::Option* o : sc->get_options())
      if (o->get_default_str() == "{}") o->default_str("");
  app.failure_message(CLI::FailureMessage::help);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    apply_thread_limit();
    fs::path out_path = out_dir;
    if (active == c_rep && out_dir.empty()) out_path = fs::path(run_dir) / "report";
    fs::create_directories(out_path);
    write_text(out_path / "manifest.toml", manifest(active));

    if (active == c_sim) cmd_simulate(sim, seed, out_path, out);
    else if (active == c_fit) cmd_fit(method, data, model, fitargs, seed, out_path, out);
    else if (active == c_gdf) cmd_gridsearch_df(data, df_ranges, out_path, out);
    else if (active == c_gl1) cmd_gridsearch_l1(data, model, fitargs, alphas, seed, out_path, out);
    else if (active == c_sub) cmd_subunits(data, sub, seed, out_path, out);
    else if (active == c_diag) cmd_diagnose(fit_path, data, n_perm, seed, out_path, out);
    else if (active == c_bench) cmd_benchmark(bench, seed, out_path, out);
    else if (active == c_rep) cmd_report(run_dir, out_path, out);
    return kOk;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n' << active->help();
    return kUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const json::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumerical;
  }
}

}  // namespace rfkit::cli
