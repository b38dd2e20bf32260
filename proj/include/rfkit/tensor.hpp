#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rfkit/error.hpp"
#include "rfkit/types.hpp"

namespace rfkit {

using Shape = std::vector<std::size_t>;

enum class TensorErrorCode {
  kEmptyShape = 1,
  kShapeMismatch,
  kNonFinite,
  kBadMagic,
  kBadHeader,
  kPayloadLengthMismatch,
  kIo,
};

class TensorError : public DataError {
 public:
  TensorError(TensorErrorCode code, const std::string& what) : DataError(what), code_(code) {}
  TensorErrorCode code() const noexcept { return code_; }

 private:
  TensorErrorCode code_;
};

// Dense n-dimensional array of doubles, row-major, time as the slowest axis.
// Construction validates the shape and rejects non-finite payloads, so a
// Tensor that exists is always well-formed. Instances are immutable.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, std::vector<std::string> labels = {});

  static Tensor zeros(Shape shape);
  // Row-major copy of a matrix; shape (rows, cols).
  static Tensor from_matrix(const Matrix& m, std::vector<std::string> labels = {});
  static Tensor from_vector(const Vector& v, Shape shape, std::vector<std::string> labels = {});

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double at(std::initializer_list<std::size_t> index) const;

  // Flat view as a column vector (row-major element order).
  Eigen::Map<const Vector> flat() const { return {data_.data(), static_cast<Index>(data_.size())}; }
  // View as (shape[0], prod(shape[1:])) row-major matrix.
  Eigen::Map<const RowMatrix> unfold() const;

  Tensor reshaped(Shape shape) const;

 private:
  Shape shape_;
  std::vector<double> data_;
  std::vector<std::string> labels_;
};

std::size_t shape_product(const Shape& shape);

// Kronecker product; result(i*p+k, j*q+l) = a(i,j) * b(k,l).
Matrix kron(const Matrix& a, const Matrix& b);

// RFT on-disk format: "RFTENSOR", u32 LE header length, JSON header, f64 LE payload.
void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(std::string_view bytes);

// CSV for rank 1 and 2 tensors: one row per line, comma separated.
void write_csv(const std::filesystem::path& path, const Tensor& t);
Tensor read_csv(const std::filesystem::path& path);

}  // namespace rfkit
