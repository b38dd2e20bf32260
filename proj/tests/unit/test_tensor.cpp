#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>

#include "doctest.h"
#include "rfkit/kernels.hpp"
#include "rfkit/rng.hpp"
#include "rfkit/tensor.hpp"

using namespace rfkit;

namespace {

Matrix random_matrix(Index r, Index c, std::uint64_t seed) {
  Rng rng(seed, 0);
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

TensorErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const TensorError& e) {
    return e.code();
  }
  FAIL("no TensorError thrown");
  return TensorErrorCode::kIo;
}

}  // namespace

TEST_CASE("tensor construction validates shape and payload") {
  CHECK(code_of([] { Tensor({}, {}); }) == TensorErrorCode::kEmptyShape);
  CHECK(code_of([] { Tensor({2, 3}, std::vector<double>(5)); }) == TensorErrorCode::kShapeMismatch);
  CHECK(code_of([] { Tensor({2}, {1.0, std::nan("")}); }) == TensorErrorCode::kNonFinite);
  CHECK(code_of([] { Tensor({1}, {std::numeric_limits<double>::infinity()}); }) == TensorErrorCode::kNonFinite);

  const Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
  CHECK(t.at({1, 2}) == 5);
  CHECK(t.unfold()(1, 0) == 3);
  CHECK(t.reshaped({3, 2}).at({2, 0}) == 4);
  CHECK_THROWS_AS(t.reshaped({4, 2}), TensorError);
}

TEST_CASE("RFT encoding round-trips bit-exactly") {
  const Matrix m = random_matrix(7, 5, 3);
  const Tensor t = Tensor::from_matrix(m, {"time", "x"});
  const Tensor back = decode_tensor(encode_tensor(t));
  CHECK(back.shape() == t.shape());
  CHECK(back.labels() == t.labels());
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);

  const auto path = std::filesystem::temp_directory_path() / "rfkit_unit_roundtrip.rft";
  write_tensor(path, t);
  CHECK(read_tensor(path).flat() == t.flat());
  std::filesystem::remove(path);
}

TEST_CASE("RFT decoding rejects corrupt input") {
  const std::string good = encode_tensor(Tensor({3}, {1, 2, 3}));
  std::string bad = good;
  bad[0] = 'X';
  CHECK(code_of([&] { decode_tensor(bad); }) == TensorErrorCode::kBadMagic);
  CHECK(code_of([&] { decode_tensor(good.substr(0, good.size() - 8)); }) ==
        TensorErrorCode::kPayloadLengthMismatch);
  CHECK_THROWS_AS(read_tensor("/nonexistent/file.rft"), TensorError);
}

TEST_CASE("kron matches its definition and the serial kernel bit-for-bit") {
  const Matrix a = random_matrix(3, 4, 1), b = random_matrix(5, 2, 2);
  const Matrix k = kron(a, b);
  REQUIRE(k.rows() == 15);
  REQUIRE(k.cols() == 8);
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 4; ++j)
      for (Index p = 0; p < 5; ++p)
        for (Index q = 0; q < 2; ++q) CHECK(k(i * 5 + p, j * 2 + q) == a(i, j) * b(p, q));
  CHECK(kernels::serial::kron(a, b) == kernels::omp::kron(a, b));
}

TEST_CASE("kron is associative and mixes products") {
  const Matrix a = random_matrix(2, 3, 4), b = random_matrix(3, 2, 5), c = random_matrix(2, 2, 6);
  CHECK((kron(kron(a, b), c) - kron(a, kron(b, c))).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix x = random_matrix(3, 2, 7), y = random_matrix(2, 3, 8);
  // (A kron B)(X kron Y) = AX kron BY
  CHECK((kron(a, b) * kron(x, y) - kron(a * x, b * y)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("csv round trip") {
  const auto path = std::filesystem::temp_directory_path() / "rfkit_unit.csv";
  const Tensor t = Tensor::from_matrix(random_matrix(4, 3, 9));
  write_csv(path, t);
  const Tensor back = read_csv(path);
  CHECK(back.shape() == t.shape());
  CHECK((back.flat() - t.flat()).cwiseAbs().maxCoeff() < 1e-15);
  std::filesystem::remove(path);
}

TEST_CASE("rng is reproducible and substreams differ") {
  Rng a(42, 1), b(42, 1), c(42, 2);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a(), y = b(), z = c();
    CHECK(x == y);
    differs = differs || x != z;
  }
  CHECK(differs);
  Rng s0 = a.substream(0), s0b = a.substream(0), s1 = a.substream(1);
  CHECK(s0() == s0b());
  CHECK(s0.normal() != s1.normal());

  Rng u(7);
  double mean = 0;
  for (int i = 0; i < 20000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
    mean += v;
  }
  CHECK(mean / 20000 == doctest::Approx(0.5).epsilon(0.02));
  double pm = 0;
  for (int i = 0; i < 20000; ++i) pm += static_cast<double>(u.poisson(3.0));
  CHECK(pm / 20000 == doctest::Approx(3.0).epsilon(0.03));
}
