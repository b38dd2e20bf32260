#include <exception>

#include "rfkit/closed_form.hpp"
#include "rfkit/error.hpp"
#include "rfkit/glm.hpp"

namespace rfkit {

DfGridResult gridsearch_df(const DesignMatrix& train, const Vector& y_train, const DesignMatrix& validation,
                           const Vector& y_validation, const std::vector<std::vector<int>>& df_grid) {
  const auto strf = train.strf_shape();
  if (df_grid.size() != strf.size()) throw InvalidArgument("need one df list per STRF dimension");
  std::size_t n_cells = 1;
  for (const auto& axis : df_grid) {
    if (axis.empty()) throw InvalidArgument("df grid axis is empty");
    n_cells *= axis.size();
  }

  DfGridResult out;
  out.cells.resize(n_cells);
  for (std::size_t c = 0; c < n_cells; ++c) {
    std::size_t rem = c;
    std::vector<int> df(df_grid.size());
    for (std::size_t a = df_grid.size(); a-- > 0;) {
      df[a] = df_grid[a][rem % df_grid[a].size()];
      rem /= df_grid[a].size();
    }
    out.cells[c] = df;
  }
  out.scores.assign(n_cells, 0.0);

  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t c = 0; c < n_cells; ++c) {
    try {
      std::vector<DimSpec> dims;
      for (std::size_t a = 0; a < strf.size(); ++a) dims.push_back({static_cast<int>(strf[a]), out.cells[c][a]});
      const SplineBasis basis = tensor_basis(dims);
      const SplineEstimate est = spl_wsta(train, y_train, basis);
      out.scores[c] = correlation_or_zero(validation.project(basis) * est.b, y_validation);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t c = 1; c < n_cells; ++c)
    if (out.scores[c] > out.scores[out.best]) out.best = c;
  return out;
}

L1GridResult gridsearch_l1(const ModelSpec& spec, const FitData& data, const FitOptions& opts,
                           const std::vector<double>& alphas) {
  if (alphas.empty()) throw InvalidArgument("alpha grid is empty");
  for (std::size_t i = 1; i < alphas.size(); ++i)
    if (!(alphas[i] > alphas[i - 1])) throw InvalidArgument("alpha grid must be strictly ascending");

  L1GridResult out;
  for (double a : alphas) {
    FitOptions o = opts;
    o.l1_weight = a;
    FitResult r = fit(spec, data, o);
    const Vector pred = predict(spec, r.coeffs, data.validation);
    const double score = correlation_or_zero(pred, data.y_validation);
    out.alphas.push_back(a);
    out.scores.push_back(score);
    out.fits.push_back(std::move(r));
    const std::size_t i = out.scores.size() - 1;
    if (score > out.scores[out.best]) out.best = i;
    if (i > 0 && score < out.scores[i - 1]) break;
  }
  return out;
}

}  // namespace rfkit
