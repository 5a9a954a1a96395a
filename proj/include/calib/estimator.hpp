#pragma once

#include "calib/calibration.hpp"
#include "calib/inference.hpp"
#include "calib/proxy.hpp"
#include "calib/trial.hpp"

#include <functional>
#include <string>
#include <vector>

namespace calib {

struct Diagnostics {
  double residual = 0.0;  // balance-constraint residual (max-norm)
  int iterations = 0;
  bool converged = true;
  std::vector<std::string> warnings;
};

struct AteReport {
  double tau_hat = 0.0;
  double se = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;
  double level = 0.95;
  std::string method;       // "sdim", "cal", "cal-cf", "aipw"
  std::string discrepancy;  // calibration methods only
  int n = 0;
  int num_strata = 0;
  int proxy_dim = 0;
  double var_h = 0.0, var_y = 0.0, var_explained = 0.0;
  Diagnostics diag;
};

// Stratified difference in means: sum_k (n_[k]/n) (ybar1_[k] - ybar0_[k]).
double sdim(const Trial& t);

// Per-unit leave-the-mean-out contrasts r_i; they sum to zero by
// construction, and (1/n) sum w_i r_i is the calibration correction.
Vector residuals(const Trial& t);

AteReport sdim_ate(const Trial& t, double level = 0.95);

AteReport calibrate_ate(const Trial& t, const ProxyMatrix& pm,
                        Discrepancy d = Discrepancy::Quadratic,
                        double level = 0.95, const SolveOptions& opts = {});

// Builds a proxy for the units of `eval` from models trained on `train`.
using ProxyBuilder =
    std::function<ProxyMatrix(const Trial& train, const Trial& eval)>;

// K-fold cross-fitted calibration: each fold is estimated with proxies
// trained on its complement, and the fold estimates are averaged. The
// variance combines fold-level components as
// (1/folds^2) sum_i V_i / n_i.
AteReport cross_fit_ate(const Trial& t, const ProxyBuilder& builder, int folds,
                        std::uint64_t seed, Discrepancy d = Discrepancy::Quadratic,
                        double level = 0.95, const SolveOptions& opts = {});

// Stratified augmented inverse-probability weighting with (stratum, arm)
// learner fits; its variance uses the same components with xi = (h1, h0).
AteReport aipw_ate(const Trial& t, const LearnerSpec& spec, double level = 0.95);

}  // namespace calib
