#pragma once

#include "calib/proxy.hpp"
#include "calib/trial.hpp"

#include <string>
#include <vector>

namespace calib {

// Discrepancy D(w) between calibrated and unit weights, identified by the
// concave conjugate rho used by the dual:
//   quadratic       D = (v-1)^2 / 2      rho(u) = -u^2/2 + u        u in R
//   exp-tilting     D = v log v - v      rho(u) = -exp(-u)          u in R
//   emp-likelihood  D = v - log v        rho(u) = 1 + log(1 + u)    u > -1
// All satisfy rho'(0) = 1 and rho''(0) = -1, so unit weights are the
// no-information solution.
enum class Discrepancy { Quadratic, ExpTilting, EmpLikelihood };

Discrepancy parse_discrepancy(const std::string& name);
std::string discrepancy_name(Discrepancy d);

double rho(Discrepancy d, double u);
double rho_d1(Discrepancy d, double u);
double rho_d2(Discrepancy d, double u);

// Balance constraints: row i carries (A_i - pi_[k]) (xi_i - xibar_[k]) in the
// d-column block of its own stratum k, zeros elsewhere.
struct ConstraintSystem {
  Matrix xi;      // n x (K*d)
  Matrix xi_bar;  // K x d stratum means of the proxy
  StratumStats stats;
  int num_strata = 0;
  int dim = 0;  // d
  std::vector<std::string> warnings;
};

ConstraintSystem build_constraints(const Trial& t, const ProxyMatrix& pm);

struct CalibrationResult {
  Vector lambda;     // K*d dual solution
  Vector weights;    // n, w_i = rho'(lambda . Xi_i)
  double objective;  // dual value (1/n) sum rho(lambda . Xi_i)
  double residual;   // max-norm of (1/n) sum w_i Xi_i
  int iterations = 0;
  bool converged = false;
};

struct SolveOptions {
  double tol = 1e-8;  // max-norm of the dual gradient
  int max_iter = 100;
  std::vector<double>* trace = nullptr;  // objective per iterate, if wanted
};

// Quadratic discrepancy in closed form: lambda = G^+ g with
// G = (1/n) sum Xi_i Xi_i', g = (1/n) sum Xi_i, weights 1 - lambda . Xi_i.
CalibrationResult solve_quadratic(const ConstraintSystem& cs);

// Damped Newton ascent on the dual, any discrepancy. Armijo backtracking
// (shrink 1/2, sufficient-increase 1e-4); the Hessian solve adds 1e-10 on the
// diagonal; emp-likelihood steps are capped so min_i(1 + lambda . Xi_i) never
// drops below a tenth of its current value.
CalibrationResult solve_dual(const ConstraintSystem& cs, Discrepancy d,
                             const SolveOptions& opts = {});

// Newton ran out of iterations; carries the last iterate.
struct NonConvergence : Error {
  CalibrationResult last;
  NonConvergence(const std::string& what, CalibrationResult r)
      : Error(what), last(std::move(r)) {}
};

// No admissible step length made progress (domain edge).
struct InfeasibleDirection : Error {
  using Error::Error;
};

// Finite-difference check of (rho'(0), rho''(0), rho'''(0)) for all three
// discrepancies against their exact values (1,-1,0), (1,-1,1), (1,-1,2).
struct RhoCheckRow {
  std::string name;
  double d1, d2, d3;
  double expected_d1, expected_d2, expected_d3;
  bool pass;
};

std::vector<RhoCheckRow> rho_table_check(double step = 1e-4, double tol = 1e-4);

}  // namespace calib
