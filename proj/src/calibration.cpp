#include "calib/calibration.hpp"

#include "calib/linalg.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>

namespace calib {

Discrepancy parse_discrepancy(const std::string& name) {
  if (name == "quadratic") return Discrepancy::Quadratic;
  if (name == "exp-tilting") return Discrepancy::ExpTilting;
  if (name == "emp-likelihood") return Discrepancy::EmpLikelihood;
  throw InvalidInput("unknown discrepancy: " + name);
}

std::string discrepancy_name(Discrepancy d) {
  switch (d) {
    case Discrepancy::Quadratic: return "quadratic";
    case Discrepancy::ExpTilting: return "exp-tilting";
    case Discrepancy::EmpLikelihood: return "emp-likelihood";
  }
  return "?";
}

double rho(Discrepancy d, double u) {
  switch (d) {
    case Discrepancy::Quadratic: return -0.5 * u * u + u;
    case Discrepancy::ExpTilting: return -std::exp(-u);
    case Discrepancy::EmpLikelihood: return 1.0 + std::log1p(u);
  }
  return 0.0;
}

double rho_d1(Discrepancy d, double u) {
  switch (d) {
    case Discrepancy::Quadratic: return 1.0 - u;
    case Discrepancy::ExpTilting: return std::exp(-u);
    case Discrepancy::EmpLikelihood: return 1.0 / (1.0 + u);
  }
  return 0.0;
}

double rho_d2(Discrepancy d, double u) {
  switch (d) {
    case Discrepancy::Quadratic: return -1.0;
    case Discrepancy::ExpTilting: return -std::exp(-u);
    case Discrepancy::EmpLikelihood: return -1.0 / ((1.0 + u) * (1.0 + u));
  }
  return 0.0;
}

ConstraintSystem build_constraints(const Trial& t, const ProxyMatrix& pm) {
  if (pm.values.rows() != t.n())
    throw InvalidInput("build_constraints: proxy rows differ from trial units");
  if (pm.values.cols() < 1)
    throw InvalidInput("build_constraints: proxy has no columns");
  if (!all_finite(pm.values))
    throw InvalidInput("build_constraints: non-finite proxy values");

  ConstraintSystem cs;
  cs.stats = stratum_stats(t);
  cs.num_strata = cs.stats.num_strata();
  cs.dim = static_cast<int>(pm.values.cols());
  cs.warnings = pm.warnings;
  const int n = t.n(), num_strata = cs.num_strata, d = cs.dim;

  cs.xi_bar = Matrix::Zero(num_strata, d);
  for (int i = 0; i < n; ++i)
    cs.xi_bar.row(t.stratum[i] - 1) += pm.values.row(i);
  for (int k = 1; k <= num_strata; ++k) {
    cs.xi_bar.row(k - 1) /= cs.stats.count[k];
    if (cs.stats.count[k] < d + 2)
      cs.warnings.push_back("small stratum " + std::to_string(k) + ": " +
                            std::to_string(cs.stats.count[k]) + " units for " +
                            std::to_string(d) + " proxy columns");
  }

  // Per (stratum, column) guard: centering residuals at the level of the
  // mean's own roundoff are exact zeros for every purpose downstream; keeping
  // them would let the pseudoinverse blow 1e-16-scale noise up into O(1)
  // weight distortions on columns that are constant within a stratum.
  Matrix centered = pm.values;
  const double eps = std::numeric_limits<double>::epsilon();
  for (int k = 1; k <= num_strata; ++k) {
    for (int j = 0; j < d; ++j) {
      double max_abs = 0.0, max_dev = 0.0;
      for (int i = 0; i < n; ++i) {
        if (t.stratum[i] != k) continue;
        max_abs = std::max(max_abs, std::fabs(pm.values(i, j)));
        max_dev = std::max(max_dev,
                           std::fabs(pm.values(i, j) - cs.xi_bar(k - 1, j)));
      }
      const double snap = 4.0 * eps * cs.stats.count[k] * max_abs;
      for (int i = 0; i < n; ++i) {
        if (t.stratum[i] != k) continue;
        centered(i, j) = max_dev <= snap
                             ? 0.0
                             : pm.values(i, j) - cs.xi_bar(k - 1, j);
      }
    }
  }

  cs.xi = Matrix::Zero(n, static_cast<Eigen::Index>(num_strata) * d);
  for (int i = 0; i < n; ++i) {
    const int k = t.stratum[i];
    const double a_centered = t.arm[i] - cs.stats.pi[k];
    cs.xi.block(i, (k - 1) * d, 1, d) = a_centered * centered.row(i);
  }
  return cs;
}

static double dual_value(const ConstraintSystem& cs, Discrepancy d, const Vector& u) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i) s += rho(d, u(i));
  return s / static_cast<double>(u.size());
}

static CalibrationResult finish(const ConstraintSystem& cs, Discrepancy d,
                                const Vector& lambda, const Vector& u,
                                int iterations, bool converged) {
  CalibrationResult r;
  r.lambda = lambda;
  r.weights.resize(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) r.weights(i) = rho_d1(d, u(i));
  r.objective = dual_value(cs, d, u);
  const Vector grad = cs.xi.transpose() * r.weights / static_cast<double>(u.size());
  r.residual = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
  r.iterations = iterations;
  r.converged = converged;
  return r;
}

CalibrationResult solve_quadratic(const ConstraintSystem& cs) {
  const double n = static_cast<double>(cs.xi.rows());
  const Matrix gram = cs.xi.transpose() * cs.xi / n;
  const Vector g = cs.xi.colwise().sum().transpose() / n;
  const Vector lambda = pseudo_inverse(gram) * g;
  const Vector u = cs.xi * lambda;
  CalibrationResult r = finish(cs, Discrepancy::Quadratic, lambda, u, 0, true);
  return r;
}

CalibrationResult solve_dual(const ConstraintSystem& cs, Discrepancy d,
                             const SolveOptions& opts) {
  const Eigen::Index n = cs.xi.rows();
  const Eigen::Index m = cs.xi.cols();
  const double inv_n = 1.0 / static_cast<double>(n);

  Vector lambda = Vector::Zero(m);
  Vector u = Vector::Zero(n);  // lambda . Xi_i per unit
  double f = dual_value(cs, d, u);
  if (opts.trace) opts.trace->push_back(f);

  for (int it = 0; it < opts.max_iter; ++it) {
    Vector w(n), curv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      w(i) = rho_d1(d, u(i));
      curv(i) = rho_d2(d, u(i));
    }
    const Vector grad = cs.xi.transpose() * w * inv_n;
    if (grad.cwiseAbs().maxCoeff() <= opts.tol)
      return finish(cs, d, lambda, u, it, true);

    // Newton direction: (-H + 1e-10 I) step = grad, with
    // H = (1/n) sum rho''(u_i) Xi_i Xi_i' negative semidefinite.
    const Vector neg_curv = -curv;
    Matrix b = cs.xi.transpose() * (neg_curv.asDiagonal() * cs.xi) * inv_n;
    b.diagonal().array() += 1e-10;
    Vector step = Eigen::LDLT<Matrix>(b).solve(grad);
    const double slope = grad.dot(step);
    if (!(slope > 0.0) || !step.allFinite())
      step = grad;  // fall back to plain ascent if the solve degenerated
    const Vector du = cs.xi * step;

    // Keep emp-likelihood iterates strictly inside u > -1: the step is capped
    // so the smallest margin 1 + u_i retains at least a tenth of its value.
    double t_max = std::numeric_limits<double>::infinity();
    if (d == Discrepancy::EmpLikelihood) {
      double margin = std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < n; ++i) margin = std::min(margin, 1.0 + u(i));
      const double floor_margin = 0.1 * margin;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (du(i) < 0.0) {
          const double t_i = (1.0 + u(i) - floor_margin) / -du(i);
          t_max = std::min(t_max, t_i);
        }
      }
    }

    double t = std::min(1.0, t_max);
    const double slope_used = grad.dot(step);
    // Near the optimum the true Armijo gain falls below one ulp of the
    // objective, so the comparison can reject steps whose gain is real but
    // unrepresentable; backtracking then throttles t until the iterate stops
    // moving at all and the loop wedges a hair above tol. One epsilon of |f|
    // keeps the test meaningful at the resolution limit and is far too small
    // to let a genuinely bad step through.
    const double f_slack =
        std::numeric_limits<double>::epsilon() * (1.0 + std::fabs(f));
    bool accepted = false;
    while (t > 1e-16) {
      const Vector u_try = u + t * du;
      const double f_try = dual_value(cs, d, u_try);
      if (f_try >= f + 1e-4 * t * slope_used - f_slack) {
        lambda += t * step;
        u = u_try;
        f = f_try;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (opts.trace) opts.trace->push_back(f);
    if (!accepted)
      throw InfeasibleDirection(
          "solve_dual(" + discrepancy_name(d) +
          "): no admissible step improves the dual (gradient max-norm " +
          std::to_string(grad.cwiseAbs().maxCoeff()) + ")");
  }

  CalibrationResult last = finish(cs, d, lambda, u, opts.max_iter, false);
  throw NonConvergence("solve_dual(" + discrepancy_name(d) + "): no convergence in " +
                           std::to_string(opts.max_iter) +
                           " iterations (residual " + std::to_string(last.residual) +
                           ")",
                       std::move(last));
}

// Finite differences on rho evaluated in extended precision; the pinned step
// of 1e-4 would otherwise lose the third derivative to cancellation.
static long double rho_ld(Discrepancy d, long double u) {
  switch (d) {
    case Discrepancy::Quadratic: return -0.5L * u * u + u;
    case Discrepancy::ExpTilting: return -expl(-u);
    case Discrepancy::EmpLikelihood: return 1.0L + log1pl(u);
  }
  return 0.0L;
}

std::vector<RhoCheckRow> rho_table_check(double step, double tol) {
  if (!(step > 0.0) || !(tol > 0.0))
    throw InvalidInput("rho_table_check: step and tol must be positive");
  const long double h = step;
  std::vector<RhoCheckRow> rows;
  const struct {
    Discrepancy d;
    double e1, e2, e3;
  } expect[] = {
      {Discrepancy::Quadratic, 1.0, -1.0, 0.0},
      {Discrepancy::ExpTilting, 1.0, -1.0, 1.0},
      {Discrepancy::EmpLikelihood, 1.0, -1.0, 2.0},
  };
  for (const auto& e : expect) {
    const long double f_m2 = rho_ld(e.d, -2 * h), f_m1 = rho_ld(e.d, -h);
    const long double f_0 = rho_ld(e.d, 0.0L);
    const long double f_p1 = rho_ld(e.d, h), f_p2 = rho_ld(e.d, 2 * h);
    RhoCheckRow r;
    r.name = discrepancy_name(e.d);
    r.d1 = static_cast<double>((f_p1 - f_m1) / (2 * h));
    r.d2 = static_cast<double>((f_p1 - 2 * f_0 + f_m1) / (h * h));
    r.d3 = static_cast<double>((f_p2 - 2 * f_p1 + 2 * f_m1 - f_m2) / (2 * h * h * h));
    r.expected_d1 = e.e1;
    r.expected_d2 = e.e2;
    r.expected_d3 = e.e3;
    r.pass = std::fabs(r.d1 - e.e1) <= tol && std::fabs(r.d2 - e.e2) <= tol &&
             std::fabs(r.d3 - e.e3) <= tol;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace calib
