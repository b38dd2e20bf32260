#include "rfkit/subunits.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rfkit/error.hpp"
#include "rfkit/kernels.hpp"
#include "rfkit/metrics.hpp"
#include "rfkit/rng.hpp"

namespace rfkit {

SpikeTriggeredEnsemble ste(const Matrix& X, const Vector& y) {
  if (X.rows() != y.size()) throw InvalidArgument("rows(X) must equal length(y)");
  Index total = 0;
  for (Index t = 0; t < y.size(); ++t) {
    if (y[t] < 0.0 || y[t] != std::floor(y[t])) throw DataError("spike counts must be non-negative integers");
    total += static_cast<Index>(y[t]);
  }
  if (total == 0) throw DataError("no spikes in the response");
  SpikeTriggeredEnsemble e;
  e.V.resize(total, X.cols());
  Index row = 0;
  for (Index t = 0; t < y.size(); ++t)
    for (Index c = 0; c < static_cast<Index>(y[t]); ++c) e.V.row(row++) = X.row(t);
  return e;
}

SpikeTriggeredEnsemble ste(const DesignMatrix& X, const Vector& y) {
  if (X.rows() != y.size()) throw InvalidArgument("rows(X) must equal length(y)");
  Index total = 0;
  for (Index t = 0; t < y.size(); ++t) {
    if (y[t] < 0.0 || y[t] != std::floor(y[t])) throw DataError("spike counts must be non-negative integers");
    total += static_cast<Index>(y[t]);
  }
  if (total == 0) throw DataError("no spikes in the response");
  SpikeTriggeredEnsemble e;
  e.V.resize(total, X.cols());
  Index row = 0;
  for (Index t = 0; t < y.size(); ++t) {
    if (y[t] == 0.0) continue;
    const kernels::LaggedView one{&X.frames(), X.n_lags(), X.begin() + t, X.begin() + t + 1};
    const Matrix r = kernels::serial::build_lagged(one);
    for (Index c = 0; c < static_cast<Index>(y[t]); ++c) e.V.row(row++) = r.row(0);
  }
  return e;
}

namespace {

struct Projector {
  Matrix S;
  Matrix S_pinv;
};

std::optional<Projector> make_projector(const std::optional<Matrix>& S, Index d) {
  if (!S) return std::nullopt;
  if (S->rows() != d) throw InvalidArgument("spline basis rows must equal the stimulus dimension");
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(*S);
  return Projector{*S, cod.pseudoInverse()};
}

// ||Vt - W H^T||_F^2 in column blocks, so the d x n residual is never held at once.
double objective(const Matrix& Vt, const Matrix& W, const Matrix& H) {
  constexpr Index kBlock = 2048;
  double acc = 0.0;
  for (Index c = 0; c < Vt.cols(); c += kBlock) {
    const Index w = std::min(kBlock, Vt.cols() - c);
    acc += (Vt.middleCols(c, w) - W * H.middleRows(c, w).transpose()).squaredNorm();
  }
  return acc;
}

// Lloyd iterations on the columns of Vt (d x n).
FactorizationResult lloyd(const Matrix& Vt, int k, const std::optional<Projector>& proj, std::uint64_t seed,
                          int max_iters) {
  const Index d = Vt.rows();
  const Index n = Vt.cols();
  Rng rng(seed, 1);
  // k distinct starting columns (partial Fisher-Yates).
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  Matrix W(d, k);
  for (int j = 0; j < k; ++j) {
    const auto pick = static_cast<std::size_t>(j) + rng.below(static_cast<std::uint64_t>(n - j));
    std::swap(idx[static_cast<std::size_t>(j)], idx[pick]);
    W.col(j) = Vt.col(idx[static_cast<std::size_t>(j)]);
  }

  FactorizationResult res;
  const double v2 = Vt.squaredNorm();
  std::vector<Index> labels;
  for (int it = 1; it <= max_iters; ++it) {
    const kernels::Assignment a = kernels::omp::nearest_centroid(Vt, W);
    res.iterations = it;
    if (it > 1 && a.label == labels) {
      res.converged = true;
      break;
    }
    labels = a.label;

    Matrix sums = Matrix::Zero(d, k);
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      sums.col(labels[i]) += Vt.col(i);
      ++counts[static_cast<std::size_t>(labels[i])];
    }
    std::vector<bool> taken(static_cast<std::size_t>(n), false);
    for (int j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) {
        W.col(j) = sums.col(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);
        continue;
      }
      // Empty cluster: restart it at the point farthest from its centroid.
      Index far = -1;
      for (Index i = 0; i < n; ++i)
        if (!taken[static_cast<std::size_t>(i)] && (far < 0 || a.dist2[i] > a.dist2[far])) far = i;
      taken[static_cast<std::size_t>(far)] = true;
      W.col(j) = Vt.col(far);
    }
    if (proj) W = proj->S * (proj->S_pinv * W);

    // sum_i ||v_i - w_l(i)||^2 from the cluster sums, as in the semi-NMF loop.
    double expanded = v2;
    for (int j = 0; j < k; ++j)
      expanded += -2.0 * W.col(j).dot(sums.col(j)) +
                  static_cast<double>(counts[static_cast<std::size_t>(j)]) * W.col(j).squaredNorm();
    if (!(expanded > 1e-6 * v2)) {
      Matrix H = Matrix::Zero(n, k);
      for (Index i = 0; i < n; ++i) H(i, labels[i]) = 1.0;
      expanded = objective(Vt, W, H);
    }
    res.objective_history.push_back(expanded);
  }

  res.W = W;
  res.H = Matrix::Zero(n, k);
  const kernels::Assignment final_a = kernels::omp::nearest_centroid(Vt, W);
  for (Index i = 0; i < n; ++i) res.H(i, final_a.label[i]) = 1.0;
  if (proj) res.B = proj->S_pinv * W;
  return res;
}

Matrix positive(const Matrix& A) { return (A.cwiseAbs() + A) / 2.0; }
Matrix negative(const Matrix& A) { return (A.cwiseAbs() - A) / 2.0; }

// W minimising ||Vt - W H^T|| given VH = Vt H (projected onto the basis when one is given).
Matrix solve_w(const Matrix& VH, const Matrix& H, const std::optional<Projector>& proj) {
  Matrix G = H.transpose() * H;
  Eigen::LLT<Matrix> llt(G);
  if (llt.info() != Eigen::Success) {
    const double eps = 1e-10 * std::max(G.trace() / static_cast<double>(G.rows()), 1.0);
    G.diagonal().array() += eps;
    llt.compute(G);
    if (llt.info() != Eigen::Success) throw NumericalError("H^T H is singular even after jitter");
  }
  Matrix W = llt.solve(VH.transpose()).transpose();
  if (proj) W = proj->S * (proj->S_pinv * W);
  return W;
}

}  // namespace

FactorizationResult kmeans_subunits(const SpikeTriggeredEnsemble& e, int k, const std::optional<Matrix>& S,
                                    std::uint64_t seed, int max_iters) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  if (k > e.V.rows()) throw InvalidArgument("k exceeds the number of spikes");
  const Matrix Vt = e.V.transpose();
  return lloyd(Vt, k, make_projector(S, Vt.rows()), seed, max_iters);
}

FactorizationResult seminmf_subunits(const SpikeTriggeredEnsemble& e, int k, const std::optional<Matrix>& S,
                                     std::uint64_t seed, const SemiNmfOptions& opts) {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  const Matrix Vt = e.V.transpose();
  const Index n = Vt.cols();
  const auto proj = make_projector(S, Vt.rows());

  Matrix H;
  if (opts.init_h) {
    H = *opts.init_h;
    if (H.rows() != n || H.cols() != k) throw InvalidArgument("initial H must be n_spikes x k");
    if ((H.array() < 0.0).any()) throw InvalidArgument("initial H must be non-negative");
  } else {
    if (k > n) throw InvalidArgument("k exceeds the number of spikes");
    H = lloyd(Vt, k, std::nullopt, seed, 300).H.array() + 0.2;
  }

  // The objective reuses Vt H from the W solve; near-exact fits fall back to
  // the direct sum, where the expansion would lose digits to cancellation.
  const double v2 = Vt.squaredNorm();
  Matrix VH = Vt * H;
  auto current_objective = [&](const Matrix& W) {
    const double expanded =
        v2 - 2.0 * (W.transpose() * VH).trace() + ((W.transpose() * W) * (H.transpose() * H)).trace();
    return expanded > 1e-6 * v2 ? expanded : objective(Vt, W, H);
  };

  FactorizationResult res;
  Matrix W = solve_w(VH, H, proj);
  double prev = current_objective(W);
  res.objective_history.push_back(prev);
  for (int it = 1; it <= opts.max_iters; ++it) {
    const Matrix VtW = Vt.transpose() * W;  // n x k
    const Matrix WtW = W.transpose() * W;
    const Matrix num = positive(VtW) + H * negative(WtW);
    const Matrix den = negative(VtW) + H * positive(WtW);
    for (Index j = 0; j < H.cols(); ++j)
      for (Index i = 0; i < H.rows(); ++i)
        if (H(i, j) > 0.0 && den(i, j) > 0.0) {
          const double updated = H(i, j) * std::sqrt(num(i, j) / den(i, j));
          if (std::isfinite(updated)) H(i, j) = updated;
        }
    VH = Vt * H;
    W = solve_w(VH, H, proj);
    const double obj = current_objective(W);
    res.objective_history.push_back(obj);
    res.iterations = it;
    const double rel = std::abs(prev - obj) / std::max(prev, 1e-300);
    prev = obj;
    if (rel < opts.tol) {
      res.converged = true;
      break;
    }
  }
  res.W = W;
  res.H = H;
  if (proj) res.B = proj->S_pinv * W;
  return res;
}

double SubunitMatch::mean_normalized_mse() const {
  if (normalized_mse.empty()) return 0.0;
  return std::accumulate(normalized_mse.begin(), normalized_mse.end(), 0.0) /
         static_cast<double>(normalized_mse.size());
}

SubunitMatch match_subunits(const Matrix& estimated, const Matrix& truth) {
  if (estimated.rows() != truth.rows() || estimated.cols() != truth.cols() || truth.cols() == 0) {
    throw InvalidArgument("estimated and true subunit matrices must have equal shape");
  }
  const Index k = truth.cols();
  Matrix cost(k, k);  // cost(i, j): truth i matched with estimate j
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < k; ++j) {
      if (estimated.col(j).norm() == 0.0) {
        cost(i, j) = 1.0 / static_cast<double>(truth.rows());  // all of the truth is missed
        continue;
      }
      const double sgn = estimated.col(j).dot(truth.col(i)) < 0.0 ? -1.0 : 1.0;
      cost(i, j) = normalized_mse(sgn * Vector(estimated.col(j)), truth.col(i));
    }

  SubunitMatch m;
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  if (k <= 6) {
    std::vector<int> best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
      double c = 0.0;
      for (Index i = 0; i < k; ++i) c += cost(i, perm[static_cast<std::size_t>(i)]);
      if (c < best_cost) {
        best_cost = c;
        best = perm;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
    m.assignment = best;
  } else {
    m.greedy = true;
    m.warnings.push_back("k > 6: greedy subunit matching, assignment may be suboptimal");
    std::vector<bool> used_t(static_cast<std::size_t>(k), false), used_e(static_cast<std::size_t>(k), false);
    m.assignment.assign(static_cast<std::size_t>(k), -1);
    for (Index step = 0; step < k; ++step) {
      Index bi = -1, bj = -1;
      for (Index i = 0; i < k; ++i)
        for (Index j = 0; j < k; ++j)
          if (!used_t[static_cast<std::size_t>(i)] && !used_e[static_cast<std::size_t>(j)] &&
              (bi < 0 || cost(i, j) < cost(bi, bj))) {
            bi = i;
            bj = j;
          }
      used_t[static_cast<std::size_t>(bi)] = used_e[static_cast<std::size_t>(bj)] = true;
      m.assignment[static_cast<std::size_t>(bi)] = static_cast<int>(bj);
    }
  }

  for (Index i = 0; i < k; ++i) {
    const Vector e = estimated.col(m.assignment[static_cast<std::size_t>(i)]);
    const Vector t = truth.col(i);
    const double tt = t.squaredNorm();
    const double s = tt > 0.0 ? e.dot(t) / tt : 0.0;
    m.scale.push_back(s);
    m.mse.push_back((e - s * t).squaredNorm() / static_cast<double>(e.size()));
    m.normalized_mse.push_back(cost(i, m.assignment[static_cast<std::size_t>(i)]));
  }
  return m;
}

}  // namespace rfkit
