#pragma once

#include <cstdint>
#include <vector>

namespace calib {

// splitmix64 finalizer; used both as a bit mixer and to expand seeds.
std::uint64_t mix64(std::uint64_t x);

// Derives an independent stream seed from (base, a, b). Replication r of a
// study uses derive_seed(base_seed, r), so streams do not depend on which
// thread picks up which replication.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

// xoshiro256++ with explicit samplers. The standard <random> distributions are
// implementation-defined, which would tie reproducibility to the toolchain;
// everything here is pinned bit-for-bit by this file alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  // Box-Muller; the second variate of each pair is cached.
  double normal();
  double normal(double mean, double sd);

  // Student t with 2 degrees of freedom: Z / sqrt(Exp(1)).
  double student_t2();

  // Beta with small integer shapes via order statistics of a+b-1 uniforms.
  double beta(int a, int b);

  bool bernoulli(double p);

  // Index into probs (must sum to ~1); inverse-CDF walk.
  int categorical(const std::vector<double>& probs);

  // Fisher-Yates shuffle of 0..n-1.
  std::vector<int> permutation(int n);
  void shuffle(std::vector<int>& v);

  // Uniform integer in [0, n).
  int below(int n);

 private:
  std::uint64_t s_[4];
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace calib
