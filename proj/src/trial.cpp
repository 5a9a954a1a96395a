#include "calib/trial.hpp"

#include "calib/rng.hpp"

#include <cstring>
#include <set>

namespace calib {

void Trial::validate() const {
  const int nn = n();
  if (nn < 1) throw InvalidInput("trial: no units");
  if (static_cast<int>(arm.size()) != nn || static_cast<int>(stratum.size()) != nn)
    throw InvalidInput("trial: arm/stratum length differs from outcome length");
  if (x.rows() != 0 && static_cast<int>(x.rows()) != nn)
    throw InvalidInput("trial: covariate rows differ from outcome length");
  if (!all_finite(y) || (x.size() > 0 && !all_finite(x)))
    throw InvalidInput("trial: non-finite values");
  if (!stratum_names.empty() &&
      static_cast<int>(covariate_names.size()) != static_cast<int>(x.cols()) &&
      !covariate_names.empty())
    throw InvalidInput("trial: covariate_names length differs from x columns");

  int k_max = 0;
  for (int b : stratum) {
    if (b < 1) throw InvalidInput("trial: stratum codes must be 1..K");
    k_max = std::max(k_max, b);
  }
  if (!stratum_names.empty() && static_cast<int>(stratum_names.size()) != k_max)
    throw InvalidInput("trial: stratum_names length differs from max stratum code");
  std::set<int> seen(stratum.begin(), stratum.end());
  for (int k = 1; k <= k_max; ++k)
    if (!seen.count(k))
      throw InvalidInput("trial: stratum codes must be contiguous 1..K (missing " +
                         std::to_string(k) + ")");
  for (int a : arm)
    if (a != 0 && a != 1) throw InvalidInput("trial: arm values must be 0 or 1");
}

StratumStats stratum_stats(const Trial& t) {
  t.validate();
  const int n = t.n();
  int num_strata = 0;
  for (int b : t.stratum) num_strata = std::max(num_strata, b);

  StratumStats s;
  s.n = n;
  s.count.assign(num_strata + 1, 0);
  s.count1.assign(num_strata + 1, 0);
  s.count0.assign(num_strata + 1, 0);
  s.share.assign(num_strata + 1, 0.0);
  s.pi.assign(num_strata + 1, 0.0);
  s.ybar1.assign(num_strata + 1, 0.0);
  s.ybar0.assign(num_strata + 1, 0.0);

  double sum1_all = 0.0, sum0_all = 0.0;
  int n1_all = 0, n0_all = 0;
  for (int i = 0; i < n; ++i) {
    const int k = t.stratum[i];
    ++s.count[k];
    if (t.arm[i] == 1) {
      ++s.count1[k];
      s.ybar1[k] += t.y(i);
      sum1_all += t.y(i);
      ++n1_all;
    } else {
      ++s.count0[k];
      s.ybar0[k] += t.y(i);
      sum0_all += t.y(i);
      ++n0_all;
    }
  }
  for (int k = 1; k <= num_strata; ++k) {
    if (s.count1[k] == 0)
      throw DegenerateStratum(k, "stratum " + std::to_string(k) + " has no treated units");
    if (s.count0[k] == 0)
      throw DegenerateStratum(k, "stratum " + std::to_string(k) + " has no control units");
    s.share[k] = static_cast<double>(s.count[k]) / n;
    s.pi[k] = static_cast<double>(s.count1[k]) / s.count[k];
    s.ybar1[k] /= s.count1[k];
    s.ybar0[k] /= s.count0[k];
  }
  s.ybar1_all = n1_all > 0 ? sum1_all / n1_all : 0.0;
  s.ybar0_all = n0_all > 0 ? sum0_all / n0_all : 0.0;
  return s;
}

Trial subset_trial(const Trial& t, const std::vector<int>& rows) {
  Trial out;
  const int m = static_cast<int>(rows.size());
  if (m == 0) throw InvalidInput("subset_trial: empty selection");
  out.y.resize(m);
  out.arm.resize(m);
  out.stratum.resize(m);
  out.x.resize(m, t.x.cols());
  for (int i = 0; i < m; ++i) {
    const int r = rows[i];
    if (r < 0 || r >= t.n()) throw InvalidInput("subset_trial: row out of range");
    out.y(i) = t.y(r);
    out.arm[i] = t.arm[r];
    out.stratum[i] = t.stratum[r];
    if (t.x.cols() > 0) out.x.row(i) = t.x.row(r);
  }
  out.stratum_names = t.stratum_names;
  out.covariate_names = t.covariate_names;
  return out;
}

std::uint64_t trial_fingerprint(const Trial& t) {
  std::uint64_t h = mix64(0x7261746966696e67ULL ^ static_cast<std::uint64_t>(t.n()));
  auto absorb = [&h](std::uint64_t v) { h = mix64(h ^ v); };
  for (int i = 0; i < t.n(); ++i) {
    std::uint64_t bits;
    const double y = t.y(i);
    std::memcpy(&bits, &y, sizeof(bits));
    absorb(bits);
    absorb(static_cast<std::uint64_t>(t.arm[i]) << 32 |
           static_cast<std::uint64_t>(t.stratum[i]));
  }
  absorb(static_cast<std::uint64_t>(t.x.cols()));
  return h;
}

}  // namespace calib
