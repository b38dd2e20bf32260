#include "rfkit/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "rfkit/kernels.hpp"

namespace rfkit {

namespace {

constexpr char kMagic[8] = {'R', 'F', 'T', 'E', 'N', 'S', 'O', 'R'};

void validate(const Shape& shape, const std::vector<double>& data,
              const std::vector<std::string>& labels) {
  if (shape.empty()) throw TensorError(TensorErrorCode::kEmptyShape, "empty shape");
  for (std::size_t d : shape) {
    if (d == 0) throw TensorError(TensorErrorCode::kEmptyShape, "empty shape");
  }
  if (shape_product(shape) != data.size()) {
    throw TensorError(TensorErrorCode::kShapeMismatch,
                      "shape product " + std::to_string(shape_product(shape)) +
                          " does not match data length " + std::to_string(data.size()));
  }
  if (!labels.empty() && labels.size() != shape.size()) {
    throw TensorError(TensorErrorCode::kShapeMismatch, "labels must name every axis");
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw TensorError(TensorErrorCode::kNonFinite, "non-finite value in tensor");
  }
}

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

std::uint32_t to_le32(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, std::vector<double> data, std::vector<std::string> labels)
    : shape_(std::move(shape)), data_(std::move(data)), labels_(std::move(labels)) {
  validate(shape_, data_, labels_);
}

Tensor Tensor::zeros(Shape shape) {
  if (shape.empty()) throw TensorError(TensorErrorCode::kEmptyShape, "empty shape");
  const std::size_t n = shape_product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::from_matrix(const Matrix& m, std::vector<std::string> labels) {
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  Eigen::Map<RowMatrix>(data.data(), m.rows(), m.cols()) = m;
  return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                std::move(data), std::move(labels));
}

Tensor Tensor::from_vector(const Vector& v, Shape shape, std::vector<std::string> labels) {
  return Tensor(std::move(shape), std::vector<double>(v.data(), v.data() + v.size()), std::move(labels));
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) throw InvalidArgument("index rank does not match tensor rank");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) throw InvalidArgument("index out of range");
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return data_[flat];
}

Eigen::Map<const RowMatrix> Tensor::unfold() const {
  const Index rows = static_cast<Index>(shape_.at(0));
  const Index cols = static_cast<Index>(data_.size()) / rows;
  return {data_.data(), rows, cols};
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_product(shape) != data_.size()) {
    throw TensorError(TensorErrorCode::kShapeMismatch, "reshape changes element count");
  }
  return Tensor(std::move(shape), data_);
}

Matrix kron(const Matrix& a, const Matrix& b) { return kernels::omp::kron(a, b); }

std::string encode_tensor(const Tensor& t) {
  nlohmann::json header;
  header["dtype"] = "f64";
  header["shape"] = t.shape();
  header["labels"] = t.labels();
  const std::string h = header.dump();

  std::string out;
  out.reserve(sizeof kMagic + 4 + h.size() + 8 * t.size());
  out.append(kMagic, sizeof kMagic);
  const std::uint32_t hlen = to_le32(static_cast<std::uint32_t>(h.size()));
  out.append(reinterpret_cast<const char*>(&hlen), 4);
  out.append(h);
  for (double v : t.data()) {
    std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(v));
    out.append(reinterpret_cast<const char*>(&bits), 8);
  }
  return out;
}

Tensor decode_tensor(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw TensorError(TensorErrorCode::kBadMagic, "bad magic");
  }
  bytes.remove_prefix(sizeof kMagic);
  if (bytes.size() < 4) throw TensorError(TensorErrorCode::kBadHeader, "truncated header length");
  std::uint32_t hlen = 0;
  std::memcpy(&hlen, bytes.data(), 4);
  hlen = to_le32(hlen);
  bytes.remove_prefix(4);
  if (bytes.size() < hlen) throw TensorError(TensorErrorCode::kBadHeader, "truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw TensorError(TensorErrorCode::kBadHeader, std::string("malformed header: ") + e.what());
  }
  bytes.remove_prefix(hlen);

  if (header.value("dtype", "") != "f64") throw TensorError(TensorErrorCode::kBadHeader, "unsupported dtype");
  if (!header.contains("shape") || !header["shape"].is_array()) {
    throw TensorError(TensorErrorCode::kBadHeader, "missing shape");
  }
  Shape shape;
  for (const auto& d : header["shape"]) {
    if (!d.is_number_integer() || d.get<long long>() < 0) {
      throw TensorError(TensorErrorCode::kBadHeader, "shape entries must be non-negative integers");
    }
    shape.push_back(d.get<std::size_t>());
  }
  if (shape.empty() || shape_product(shape) == 0) throw TensorError(TensorErrorCode::kEmptyShape, "empty shape");
  std::vector<std::string> labels;
  if (header.contains("labels")) labels = header["labels"].get<std::vector<std::string>>();

  const std::size_t n = shape_product(shape);
  if (bytes.size() != 8 * n) throw TensorError(TensorErrorCode::kPayloadLengthMismatch, "payload length mismatch");
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, bytes.data() + 8 * i, 8);
    data[i] = std::bit_cast<double>(to_le(bits));
  }
  return Tensor(std::move(shape), std::move(data), std::move(labels));
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TensorError(TensorErrorCode::kIo, "cannot open " + path.string() + " for writing");
  const std::string bytes = encode_tensor(t);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw TensorError(TensorErrorCode::kIo, "write failed: " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TensorError(TensorErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_tensor(ss.str());
}

void write_csv(const std::filesystem::path& path, const Tensor& t) {
  if (t.rank() > 2) throw InvalidArgument("CSV export supports rank <= 2");
  std::ofstream out(path);
  if (!out) throw TensorError(TensorErrorCode::kIo, "cannot open " + path.string() + " for writing");
  const std::size_t rows = t.dim(0);
  const std::size_t cols = t.rank() == 2 ? t.dim(1) : 1;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (c) out << ',';
      out << format_double(t[r * cols + c]);
    }
    out << '\n';
  }
}

Tensor read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TensorError(TensorErrorCode::kIo, "cannot open " + path.string());
  std::vector<double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::size_t count = 0;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        data.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw TensorError(TensorErrorCode::kBadHeader, "unparseable CSV cell '" + cell + "'");
      }
      ++count;
    }
    if (rows == 0) cols = count;
    if (count != cols) throw TensorError(TensorErrorCode::kShapeMismatch, "ragged CSV rows");
    ++rows;
  }
  if (rows == 0) throw TensorError(TensorErrorCode::kEmptyShape, "empty shape");
  if (cols == 1) return Tensor({rows}, std::move(data));
  return Tensor({rows, cols}, std::move(data));
}

}  // namespace rfkit
