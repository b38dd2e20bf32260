#include "rfkit/design.hpp"

#include <cmath>
#include <string>

#include "rfkit/error.hpp"

namespace rfkit {

DesignMatrix::DesignMatrix(std::shared_ptr<const RowMatrix> frames, std::vector<std::size_t> frame_shape,
                           Index n_lags, double delta_t, Index begin, Index end)
    : frames_(std::move(frames)),
      frame_shape_(std::move(frame_shape)),
      n_lags_(n_lags),
      delta_t_(delta_t),
      begin_(begin),
      end_(end) {
  if (!frames_) throw InvalidArgument("design matrix needs frames");
  if (n_lags_ < 1) throw InvalidArgument("n_lags must be >= 1");
  if (begin_ < 0 || end_ > frames_->rows() || begin_ > end_) throw InvalidArgument("design rows out of range");
}

Shape DesignMatrix::strf_shape() const {
  Shape s{static_cast<std::size_t>(n_lags_)};
  s.insert(s.end(), frame_shape_.begin(), frame_shape_.end());
  return s;
}

Matrix DesignMatrix::materialize() const { return kernels::omp::build_lagged(view()); }

Vector DesignMatrix::apply(const Vector& w) const { return kernels::omp::lagged_apply(view(), w); }

Vector DesignMatrix::apply_t(const Vector& r) const { return kernels::omp::lagged_apply_t(view(), r); }

Matrix DesignMatrix::project(const SplineBasis& basis) const {
  const auto& dims = basis.dims();
  if (dims.empty() || dims[0].num_points != n_lags_) {
    throw InvalidArgument("basis time axis must have n_lags points");
  }
  Index spatial = 1;
  for (std::size_t i = 1; i < dims.size(); ++i) spatial *= dims[i].num_points;
  if (spatial != frames_->cols()) throw InvalidArgument("basis spatial size does not match stimulus frames");
  return kernels::omp::lagged_project(view(), basis.per_dim()[0], basis.trailing());
}

DesignMatrix DesignMatrix::rows_slice(Index begin, Index end) const {
  if (begin < 0 || end > rows() || begin > end) throw InvalidArgument("row slice out of range");
  return DesignMatrix(frames_, frame_shape_, n_lags_, delta_t_, begin_ + begin, begin_ + end);
}

DesignMatrix DesignMatrix::with_frames(std::shared_ptr<const RowMatrix> frames) const {
  if (!frames || frames->rows() != frames_->rows() || frames->cols() != frames_->cols()) {
    throw InvalidArgument("replacement frames must match the original layout");
  }
  return DesignMatrix(std::move(frames), frame_shape_, n_lags_, delta_t_, begin_, end_);
}

DesignMatrix build_design(const Tensor& stimulus, Index n_lags, double delta_t) {
  if (stimulus.rank() < 1) throw InvalidArgument("stimulus needs a time axis");
  const auto n = static_cast<Index>(stimulus.dim(0));
  if (n_lags < 1) throw InvalidArgument("n_lags must be >= 1");
  if (n_lags > n) {
    throw DataError("n_lags (" + std::to_string(n_lags) + ") exceeds the number of samples (" +
                    std::to_string(n) + ")");
  }
  auto frames = std::make_shared<const RowMatrix>(stimulus.unfold());
  std::vector<std::size_t> frame_shape(stimulus.shape().begin() + 1, stimulus.shape().end());
  return DesignMatrix(std::move(frames), std::move(frame_shape), n_lags, delta_t, 0, n);
}

Tensor center_stimulus(const Tensor& stimulus, Index train_begin, Index train_end) {
  const auto frames = stimulus.unfold();
  if (train_begin < 0 || train_end > frames.rows() || train_begin >= train_end) {
    throw InvalidArgument("centering range out of bounds");
  }
  const Eigen::RowVectorXd mean = frames.middleRows(train_begin, train_end - train_begin).colwise().mean();
  RowMatrix centered = frames.rowwise() - mean;
  std::vector<double> data(centered.data(), centered.data() + centered.size());
  return Tensor(stimulus.shape(), std::move(data), stimulus.labels());
}

DataSplit split(Index n_samples, Index train_len, Index val_len, Index n_test_blocks, Index test_len) {
  if (train_len <= 0 || val_len <= 0 || n_test_blocks < 0 || test_len < 0) {
    throw InvalidArgument("split lengths must be positive");
  }
  const Index needed = train_len + val_len + n_test_blocks * test_len;
  if (needed > n_samples || train_len >= n_samples) {
    throw DataError("insufficient samples: need " + std::to_string(needed) + ", have " + std::to_string(n_samples));
  }
  DataSplit s;
  s.train = {0, train_len};
  s.validation = {train_len, train_len + val_len};
  Index at = s.validation.end;
  for (Index i = 0; i < n_test_blocks; ++i) {
    s.test.push_back({at, at + test_len});
    at += test_len;
  }
  return s;
}

Index frames_for(double seconds, double delta_t) {
  if (!(seconds > 0.0) || !(delta_t > 0.0)) throw InvalidArgument("duration and bin width must be positive");
  return static_cast<Index>(std::llround(seconds / delta_t));
}

}  // namespace rfkit
