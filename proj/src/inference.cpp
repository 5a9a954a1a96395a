#include "calib/inference.hpp"

#include "calib/linalg.hpp"

#include <cmath>

namespace calib {

VarianceComponents variance_components(const Trial& t, const Matrix& xi,
                                       const VarianceOptions& opts) {
  if (xi.rows() != 0 && xi.rows() != t.n())
    throw InvalidInput("variance_components: xi rows differ from trial units");
  if (xi.size() > 0 && !all_finite(xi))
    throw InvalidInput("variance_components: non-finite xi");

  const StratumStats s = stratum_stats(t);
  const int n = t.n(), num_strata = s.num_strata();
  const int d = static_cast<int>(xi.cols());

  // Stratum means of xi.
  Matrix xi_bar = Matrix::Zero(num_strata, std::max(d, 1));
  if (d > 0) {
    for (int i = 0; i < n; ++i) xi_bar.row(t.stratum[i] - 1) += xi.row(i);
    for (int k = 1; k <= num_strata; ++k) xi_bar.row(k - 1) /= s.count[k];
  }

  VarianceComponents vc;
  vc.stratum_rank.assign(num_strata + 1, 0);
  vc.df.assign(num_strata + 1, 1.0);
  const double overall_contrast = s.ybar1_all - s.ybar0_all;

  for (int k = 1; k <= num_strata; ++k) {
    const double pi = s.pi[k], share = s.share[k];
    double ss1 = 0.0, ss0 = 0.0;
    Vector gamma = Vector::Zero(std::max(d, 1));
    Matrix sigma = Matrix::Zero(std::max(d, 1), std::max(d, 1));
    for (int i = 0; i < n; ++i) {
      if (t.stratum[i] != k) continue;
      const double dev1 = t.y(i) - s.ybar1[k];
      const double dev0 = t.y(i) - s.ybar0[k];
      if (t.arm[i] == 1)
        ss1 += dev1 * dev1;
      else
        ss0 += dev0 * dev0;
      if (d > 0) {
        const Vector xc = (xi.row(i) - xi_bar.row(k - 1)).transpose();
        if (t.arm[i] == 1)
          gamma += (1.0 - pi) / pi * xc * dev1;
        else
          gamma += pi / (1.0 - pi) * xc * dev0;
        const double ac = t.arm[i] - pi;
        sigma += ac * ac * xc * xc.transpose();
      }
    }
    gamma /= n;
    sigma /= n;

    int rank = 0;
    double explained_k = 0.0;
    if (d > 0) {
      const PinvResult pr = pinv_with_rank(sigma, opts.rank_tol);
      rank = std::min(pr.rank, d);
      explained_k = gamma.dot(pr.pinv * gamma);
    }
    vc.stratum_rank[k] = rank;

    double df = 1.0;
    if (opts.df_adjust) {
      if (s.count[k] <= rank + 1)
        throw InsufficientDf(k, "stratum " + std::to_string(k) + " has " +
                                    std::to_string(s.count[k]) +
                                    " units for proxy rank " + std::to_string(rank));
      df = static_cast<double>(s.count[k]) / (s.count[k] - rank - 1);
    }
    vc.df[k] = df;

    vc.var_y += df * (share / (1.0 - pi) * ss0 / s.count0[k] +
                      share / pi * ss1 / s.count1[k]);
    const double c = s.ybar1[k] - s.ybar0[k] - overall_contrast;
    vc.var_h += df * share * c * c;
    vc.var_explained += df * explained_k;
  }
  return vc;
}

double normal_quantile(double p) {
  // Beasley-Springer-Moro style rational approximation (Acklam), refined with
  // one Halley step; good to ~1e-15 over (0, 1).
  if (!(p > 0.0 && p < 1.0))
    throw InvalidInput("normal_quantile: p must lie in (0, 1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double dd[] = {7.784695709041462e-03, 3.224671290700398e-01,
                              2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425, p_high = 1.0 - p_low;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
  } else if (p <= p_high) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((dd[0] * q + dd[1]) * q + dd[2]) * q + dd[3]) * q + 1.0);
  }
  // Halley refinement against the CDF via erfc.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

CiResult confidence_interval(double tau_hat, const VarianceComponents& vc, int n,
                             double level) {
  if (n < 1) throw InvalidInput("confidence_interval: n < 1");
  if (!(level > 0.0 && level < 1.0))
    throw InvalidInput("confidence_interval: level must lie in (0, 1)");
  const double total = vc.var_h + vc.var_y - vc.var_explained;
  if (!(total > 0.0))
    throw InferenceError(
        "variance estimate is non-positive (var_h " + std::to_string(vc.var_h) +
        " + var_y " + std::to_string(vc.var_y) + " - var_explained " +
        std::to_string(vc.var_explained) + ")");
  CiResult ci;
  ci.se = std::sqrt(total / n);
  const double z = normal_quantile(0.5 * (1.0 + level));
  ci.lo = tau_hat - z * ci.se;
  ci.hi = tau_hat + z * ci.se;
  return ci;
}

}  // namespace calib
