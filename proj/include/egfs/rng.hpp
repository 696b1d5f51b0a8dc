#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace egfs {

/// Deterministic PRNG (xoshiro256** seeded through splitmix64).
///
/// Every random draw in the project flows from one master seed expanded into
/// named streams ("scene", "train", "ransac", "buffer"), so toggling one
/// component cannot shift the sequence another component sees. Distributions
/// are hand-rolled rather than taken from <random> because the standard
/// distributions are implementation-defined and would break byte-identical
/// reproducibility across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  /// Named-stream splitter: an independent generator derived from
  /// (master_seed, name).
  static Rng stream(uint64_t master_seed, std::string_view name);

  /// Child generator derived from this stream's seed and an index,
  /// e.g. one solver stream per frame regardless of processing order.
  Rng substream(uint64_t index) const;

  uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller (second value cached).
  double normal();
  double normal(double mu, double sigma);

  /// Unbiased uniform integer in [0, n), n > 0 (rejection sampling).
  uint64_t uniform_int(uint64_t n);

  /// Fisher-Yates shuffle using uniform_int.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_[4];
  uint64_t seed_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace egfs
