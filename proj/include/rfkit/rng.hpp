#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace rfkit {

// PCG32 (XSH-RR 64/32, O'Neill 2014). The (seed, stream) pair fully determines
// the sequence on every platform. Satisfies UniformRandomBitGenerator so it can
// drive Boost.Random distributions.
class Rng {
 public:
  using result_type = std::uint32_t;
  static constexpr std::string_view kAlgorithm = "pcg32-xsh-rr";

  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  // Independent generator for parallel work item `index`.
  Rng substream(std::uint64_t index) const;

  double uniform();  // [0, 1), 53-bit resolution
  double normal();
  std::uint64_t poisson(double mean);
  std::uint64_t below(std::uint64_t bound);  // uniform integer in [0, bound)

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t state_ = 0;
  std::uint64_t inc_ = 0;
};

}  // namespace rfkit
