#pragma once

#include "calib/trial.hpp"

#include <string>
#include <vector>

namespace calib {

// Plug-in pieces of the asymptotic variance of sqrt(n) (tau_hat - tau):
//   var_h          between-stratum contrast spread
//   var_y          within-stratum outcome spread, inverse-share weighted
//   var_explained  the part removed by balancing the proxy columns
// Each stratum's contribution carries a small-sample factor
// n_[k] / (n_[k] - r_[k] - 1), where r_[k] is the numerical rank of that
// stratum's proxy Gram (capped at d).
struct VarianceComponents {
  double var_h = 0.0;
  double var_y = 0.0;
  double var_explained = 0.0;
  std::vector<int> stratum_rank;  // index 0 unused
  std::vector<double> df;         // index 0 unused
};

struct VarianceOptions {
  bool df_adjust = true;  // false: all df factors forced to 1
  double rank_tol = 0.0;  // 0: default pseudoinverse tolerance
};

// xi may have zero columns (no proxy): var_explained is then 0 and ranks 0.
VarianceComponents variance_components(const Trial& t, const Matrix& xi,
                                       const VarianceOptions& opts = {});

struct CiResult {
  double se = 0.0;
  double lo = 0.0, hi = 0.0;
};

// Normal-quantile interval from the component total (var_h + var_y -
// var_explained) / n. A non-positive total is an InferenceError.
CiResult confidence_interval(double tau_hat, const VarianceComponents& vc, int n,
                             double level);

// Inverse standard normal CDF.
double normal_quantile(double p);

// A stratum too small for its proxy rank: n_[k] <= r_[k] + 1.
struct InsufficientDf : Error {
  int stratum;
  InsufficientDf(int k, const std::string& what) : Error(what), stratum(k) {}
};

struct InferenceError : Error {
  using Error::Error;
};

}  // namespace calib
