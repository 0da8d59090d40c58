#pragma once

#include <cstdint>
#include <random>

#include "winflow/util.hpp"

namespace winflow {

// Seeded random stream. All randomness in the library flows through this
// wrapper so trajectories, losses, and metrics reproduce exactly for a
// fixed seed. The uniform draws are hand-rolled on top of mt19937_64
// instead of <random> distributions, whose output is implementation
// defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // Uniform double in [0, 1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform index in [0, n). Modulo bias is ~n/2^64, far below anything
  // the statistical tests can resolve.
  std::size_t uniform_index(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

  std::uint64_t next_u64() { return gen_(); }

  // Independent child stream; advancing the child never touches the parent.
  Rng fork(std::string_view tag) { return Rng(derive_seed(gen_(), tag)); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace winflow
