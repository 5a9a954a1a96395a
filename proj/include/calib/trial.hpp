#pragma once

#include "calib/common.hpp"

#include <string>
#include <vector>

namespace calib {

// A stratified two-arm trial. Stratum labels are the contiguous codes 1..K;
// stratum_names keeps the original tokens (for files that used arbitrary
// ones) and covariate_names the column headers, so writes round-trip.
struct Trial {
  Vector y;
  std::vector<int> arm;      // 0 = control, 1 = treated
  std::vector<int> stratum;  // 1..K
  Matrix x;                  // n rows, p >= 0 covariate columns
  std::vector<std::string> stratum_names;
  std::vector<std::string> covariate_names;

  int n() const { return static_cast<int>(y.size()); }
  int num_strata() const { return static_cast<int>(stratum_names.size()); }
  int num_covariates() const { return static_cast<int>(x.cols()); }

  // Shape and label checks; throws InvalidInput. Does not require both arms
  // per stratum (estimation-time checks do).
  void validate() const;
};

// Per-stratum counts and means. Index 0 is unused; strata are 1..K.
struct StratumStats {
  int n = 0;
  std::vector<int> count, count1, count0;
  std::vector<double> share;  // n_[k] / n
  std::vector<double> pi;     // n_1[k] / n_[k]
  std::vector<double> ybar1, ybar0;
  double ybar1_all = 0.0, ybar0_all = 0.0;  // plain arm means over all strata
  int num_strata() const { return static_cast<int>(count.size()) - 1; }
};

// Throws DegenerateStratum if any stratum lacks treated or control units.
StratumStats stratum_stats(const Trial& t);

// Row subset in the given order; stratum codes and names are preserved.
Trial subset_trial(const Trial& t, const std::vector<int>& rows);

// Deterministic 64-bit digest of (y, arm, stratum, shape); used to derive
// per-dataset seeds (e.g. the cross-fitting split) so identical data always
// splits identically.
std::uint64_t trial_fingerprint(const Trial& t);

}  // namespace calib
