#pragma once

#include <cstdint>
#include <random>

#include "mpfit/common.hpp"

namespace mpfit {

/// Mixes a base seed with a stream tag into an independent seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag);

/// Deterministic random stream. All distributions are hand-rolled on top of
/// the raw 64-bit generator so results do not depend on the standard library
/// implementation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per call, deterministic).
  double normal();

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  Vec uniform_vec(int n, double lo, double hi);

  /// In-place Fisher-Yates shuffle of 0..n-1.
  std::vector<int> permutation(int n);

  /// Flat Dirichlet over `parts` components (sums to one).
  Vec dirichlet(int parts);

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mpfit
