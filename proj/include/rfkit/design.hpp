#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "rfkit/kernels.hpp"
#include "rfkit/spline_basis.hpp"
#include "rfkit/tensor.hpp"

namespace rfkit {

// Time-lagged stimulus design matrix. Stored implicitly as the stimulus frames
// plus a row window, so large designs (e.g. 25x25x25 STRFs) never need the
// dense n x d matrix; `materialize()` builds it when a solver wants it.
class DesignMatrix {
 public:
  DesignMatrix(std::shared_ptr<const RowMatrix> frames, std::vector<std::size_t> frame_shape, Index n_lags,
               double delta_t, Index begin, Index end);

  Index rows() const { return end_ - begin_; }
  Index cols() const { return n_lags_ * frames_->cols(); }
  Index n_lags() const { return n_lags_; }
  double delta_t() const { return delta_t_; }
  Index begin() const { return begin_; }
  Index end() const { return end_; }
  const std::vector<std::size_t>& frame_shape() const { return frame_shape_; }
  const RowMatrix& frames() const { return *frames_; }
  std::shared_ptr<const RowMatrix> shared_frames() const { return frames_; }
  // STRF shape: (n_lags, frame dims...).
  Shape strf_shape() const;

  kernels::LaggedView view() const { return {frames_.get(), n_lags_, begin_, end_}; }

  Matrix materialize() const;
  Vector apply(const Vector& w) const;      // X w
  Vector apply_t(const Vector& r) const;    // X^T r
  // X S for a basis laid out as (n_lags, frame dims...), via the Kronecker structure.
  Matrix project(const SplineBasis& basis) const;

  // Same stimulus, rows [begin, end) relative to this view.
  DesignMatrix rows_slice(Index begin, Index end) const;
  // Same row window over a different frame sequence (used by permutation tests).
  DesignMatrix with_frames(std::shared_ptr<const RowMatrix> frames) const;

 private:
  std::shared_ptr<const RowMatrix> frames_;
  std::vector<std::size_t> frame_shape_;
  Index n_lags_;
  double delta_t_;
  Index begin_;
  Index end_;
};

// stimulus: (time, spatial dims...). Rows are zero-padded before t = 0.
DesignMatrix build_design(const Tensor& stimulus, Index n_lags, double delta_t);

// Subtract the per-pixel mean over frames [train_begin, train_end).
Tensor center_stimulus(const Tensor& stimulus, Index train_begin, Index train_end);

struct IndexRange {
  Index begin = 0;
  Index end = 0;
  Index size() const { return end - begin; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

struct DataSplit {
  IndexRange train;
  IndexRange validation;
  std::vector<IndexRange> test;
};

DataSplit split(Index n_samples, Index train_len, Index val_len, Index n_test_blocks, Index test_len);

// Seconds -> whole frames at the given bin width.
Index frames_for(double seconds, double delta_t);

}  // namespace rfkit
