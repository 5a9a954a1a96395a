#include "calib/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace calib {

double sdim(const Trial& t) {
  const StratumStats s = stratum_stats(t);
  double tau = 0.0;
  for (int k = 1; k <= s.num_strata(); ++k)
    tau += s.share[k] * (s.ybar1[k] - s.ybar0[k]);
  return tau;
}

Vector residuals(const Trial& t) {
  const StratumStats s = stratum_stats(t);
  Vector r(t.n());
  for (int i = 0; i < t.n(); ++i) {
    const int k = t.stratum[i];
    r(i) = t.arm[i] == 1 ? (t.y(i) - s.ybar1[k]) / s.pi[k]
                         : -(t.y(i) - s.ybar0[k]) / (1.0 - s.pi[k]);
  }
  return r;
}

AteReport sdim_ate(const Trial& t, double level) {
  AteReport rep;
  rep.tau_hat = sdim(t);
  rep.method = "sdim";
  rep.n = t.n();
  const VarianceComponents vc = variance_components(t, Matrix(0, 0));
  rep.num_strata = static_cast<int>(vc.df.size()) - 1;
  rep.proxy_dim = 0;
  rep.var_h = vc.var_h;
  rep.var_y = vc.var_y;
  rep.var_explained = 0.0;
  const CiResult ci = confidence_interval(rep.tau_hat, vc, rep.n, level);
  rep.se = ci.se;
  rep.ci_lo = ci.lo;
  rep.ci_hi = ci.hi;
  rep.level = level;
  return rep;
}

AteReport calibrate_ate(const Trial& t, const ProxyMatrix& pm, Discrepancy d,
                        double level, const SolveOptions& opts) {
  const ConstraintSystem cs = build_constraints(t, pm);
  const CalibrationResult cal =
      d == Discrepancy::Quadratic ? solve_quadratic(cs) : solve_dual(cs, d, opts);

  const Vector r = residuals(t);
  // (1/n) sum w_i r_i, written with w_i - 1: the residuals sum to zero, so
  // the two forms agree, and this one is exactly zero at unit weights.
  double correction = 0.0;
  for (int i = 0; i < t.n(); ++i) correction += (cal.weights(i) - 1.0) * r(i);
  correction /= t.n();

  AteReport rep;
  rep.tau_hat = sdim(t) + correction;
  rep.method = "cal";
  rep.discrepancy = discrepancy_name(d);
  rep.n = t.n();
  rep.num_strata = cs.num_strata;
  rep.proxy_dim = cs.dim;

  const VarianceComponents vc = variance_components(t, pm.values);
  rep.var_h = vc.var_h;
  rep.var_y = vc.var_y;
  rep.var_explained = vc.var_explained;
  const CiResult ci = confidence_interval(rep.tau_hat, vc, rep.n, level);
  rep.se = ci.se;
  rep.ci_lo = ci.lo;
  rep.ci_hi = ci.hi;
  rep.level = level;
  rep.diag.residual = cal.residual;
  rep.diag.iterations = cal.iterations;
  rep.diag.converged = cal.converged;
  rep.diag.warnings = cs.warnings;
  return rep;
}

AteReport cross_fit_ate(const Trial& t, const ProxyBuilder& builder, int folds,
                        std::uint64_t seed, Discrepancy d, double level,
                        const SolveOptions& opts) {
  const auto fold_rows = cross_fit_split(t, folds, seed);
  std::vector<int> all(t.n());
  std::iota(all.begin(), all.end(), 0);

  AteReport rep;
  rep.method = "cal-cf";
  rep.discrepancy = discrepancy_name(d);
  rep.n = t.n();
  rep.level = level;

  double tau_sum = 0.0, var_of_mean = 0.0;
  for (int f = 0; f < folds; ++f) {
    std::vector<int> train_rows;
    train_rows.reserve(t.n());
    std::set_difference(all.begin(), all.end(), fold_rows[f].begin(),
                        fold_rows[f].end(), std::back_inserter(train_rows));
    const Trial eval = subset_trial(t, fold_rows[f]);
    const Trial train = subset_trial(t, train_rows);
    const ProxyMatrix pm = builder(train, eval);
    const AteReport fold_rep = calibrate_ate(eval, pm, d, level, opts);

    tau_sum += fold_rep.tau_hat;
    const double v_fold = fold_rep.var_h + fold_rep.var_y - fold_rep.var_explained;
    var_of_mean += v_fold / fold_rep.n;
    rep.var_h += fold_rep.var_h / folds;
    rep.var_y += fold_rep.var_y / folds;
    rep.var_explained += fold_rep.var_explained / folds;
    rep.num_strata = fold_rep.num_strata;
    rep.proxy_dim = fold_rep.proxy_dim;
    rep.diag.residual = std::max(rep.diag.residual, fold_rep.diag.residual);
    rep.diag.iterations += fold_rep.diag.iterations;
    rep.diag.converged = rep.diag.converged && fold_rep.diag.converged;
    rep.diag.warnings.insert(rep.diag.warnings.end(), fold_rep.diag.warnings.begin(),
                             fold_rep.diag.warnings.end());
  }
  var_of_mean /= static_cast<double>(folds) * folds;

  rep.tau_hat = tau_sum / folds;
  if (!(var_of_mean > 0.0))
    throw InferenceError("cross-fit variance estimate is non-positive");
  rep.se = std::sqrt(var_of_mean);
  const double z = normal_quantile(0.5 * (1.0 + level));
  rep.ci_lo = rep.tau_hat - z * rep.se;
  rep.ci_hi = rep.tau_hat + z * rep.se;
  return rep;
}

AteReport aipw_ate(const Trial& t, const LearnerSpec& spec, double level) {
  const ProxyMatrix pm = within_stratum_proxy(t, spec);
  const StratumStats s = stratum_stats(t);

  double tau = 0.0;
  for (int i = 0; i < t.n(); ++i) {
    const int k = t.stratum[i];
    const double h1 = pm.values(i, 0), h0 = pm.values(i, 1);
    if (t.arm[i] == 1)
      tau += (t.y(i) - h1) / s.pi[k];
    else
      tau -= (t.y(i) - h0) / (1.0 - s.pi[k]);
    tau += h1 - h0;
  }
  tau /= t.n();

  AteReport rep;
  rep.tau_hat = tau;
  rep.method = "aipw";
  rep.n = t.n();
  rep.num_strata = s.num_strata();
  rep.proxy_dim = 2;
  const VarianceComponents vc = variance_components(t, pm.values);
  rep.var_h = vc.var_h;
  rep.var_y = vc.var_y;
  rep.var_explained = vc.var_explained;
  const CiResult ci = confidence_interval(tau, vc, rep.n, level);
  rep.se = ci.se;
  rep.ci_lo = ci.lo;
  rep.ci_hi = ci.hi;
  rep.level = level;
  rep.diag.warnings = pm.warnings;
  return rep;
}

}  // namespace calib
