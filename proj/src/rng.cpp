#include "calib/rng.hpp"

#include "calib/common.hpp"

#include <algorithm>
#include <cmath>

namespace calib {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  std::uint64_t h = mix64(base);
  h = mix64(h ^ (a + 0x9e3779b97f4a7c15ULL));
  h = mix64(h ^ (b + 0x7f4a7c159e3779b9ULL));
  return h;
}

Rng::Rng(std::uint64_t seed) {
  // Expand the seed through splitmix64 as the xoshiro authors recommend.
  std::uint64_t sm = seed;
  for (auto& w : s_) {
    sm += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = sm;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    w = z ^ (z >> 31);
  }
}

static inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

std::uint64_t Rng::next() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  // 1 - u lies in (0, 1], so the log is finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 6.283185307179586476925286766559 * u2;
  cached_normal_ = r * std::sin(a);
  has_cached_normal_ = true;
  return r * std::cos(a);
}

double Rng::normal(double mean, double sd) { return mean + sd * normal(); }

double Rng::student_t2() {
  // Z / sqrt(chi2_2 / 2) and chi2_2 / 2 = Exp(1).
  const double e = -std::log(1.0 - uniform());
  return normal() / std::sqrt(e);
}

double Rng::beta(int a, int b) {
  if (a < 1 || b < 1 || a + b > 64)
    throw InvalidInput("beta: integer shapes in [1, 64) required");
  const int m = a + b - 1;
  double u[64];
  for (int i = 0; i < m; ++i) u[i] = uniform();
  std::nth_element(u, u + (a - 1), u + m);
  return u[a - 1];
}

bool Rng::bernoulli(double p) { return uniform() < p; }

int Rng::categorical(const std::vector<double>& probs) {
  const double u = uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

int Rng::below(int n) {
  // Rejection-free would bias tiny amounts; n is always << 2^32 here, so use
  // the unbiased bounded method.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  std::uint64_t x, r;
  do {
    x = next();
    r = x % bound;
  } while (x - r > std::uint64_t(0) - bound);
  return static_cast<int>(r);
}

std::vector<int> Rng::permutation(int n) {
  std::vector<int> v(n);
  for (int i = 0; i < n; ++i) v[i] = i;
  shuffle(v);
  return v;
}

void Rng::shuffle(std::vector<int>& v) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
    const int j = below(i + 1);
    std::swap(v[i], v[j]);
  }
}

}  // namespace calib
