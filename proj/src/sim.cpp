#include "calib/sim.hpp"

#include "calib/parallel.hpp"
#include "calib/rng.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>

namespace calib {

namespace {

void check_spec(const ModelSpec& spec) {
  if (spec.model_id < 1 || spec.model_id > 4)
    throw InvalidInput("model_id must be 1..4");
  if (spec.n < 8) throw InvalidInput("model: n too small");
  if (spec.p < 4) throw InvalidInput("model: p must be >= 4");
}

// Symmetric square root of the noise-covariate covariance, cached per
// (kind, size). kind 0: equicorrelated 0.2; kind 1: Toeplitz with ratio 0.5.
std::shared_ptr<const Matrix> cov_sqrt(int kind, int m) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<const Matrix>> cache;
  std::lock_guard<std::mutex> lock(mu);
  const auto key = std::make_pair(kind, m);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  if (m == 0) {
    auto empty = std::make_shared<Matrix>(0, 0);
    cache[key] = empty;
    return empty;
  }

  Matrix cov(m, m);
  if (kind == 0) {
    cov.setConstant(0.2);
    cov.diagonal().setConstant(1.0);
  } else {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) cov(i, j) = std::pow(0.5, std::abs(i - j));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  const Vector lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  auto root = std::make_shared<Matrix>(es.eigenvectors() * lam.asDiagonal() *
                                       es.eigenvectors().transpose());
  cache[key] = root;
  return root;
}

// X3 in {-1,1} equal, X4 in {3,5} with probs (0.6, 0.4), X5..Xp correlated
// noise — the tail shared by models 1, 2 and 4.
void draw_tail_like_model1(
    Rng& rng, const Matrix& root,
    Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> x) {
  const int p = static_cast<int>(x.size());
  x(2) = rng.bernoulli(0.5) ? 1.0 : -1.0;
  x(3) = rng.bernoulli(0.6) ? 3.0 : 5.0;
  if (p > 4) {
    Vector z(p - 4);
    for (int j = 0; j < p - 4; ++j) z(j) = rng.normal();
    x.tail(p - 4) = (root * z).transpose();
  }
}

struct Potential {
  double g0 = 0.0, g1 = 0.0;
};

Potential outcome_means(int model_id, const Eigen::RowVectorXd& x, double s_var) {
  Potential g;
  const double x1 = x(0), x2 = x(1);
  switch (model_id) {
    case 1: {
      const double x3 = x(2), x4 = x(3);
      g.g0 = 1.0 + 75.0 * x1 + 35.0 * x2 + 125.0 * x3 + 80.0 * x4;
      g.g1 = 4.0 + 100.0 * x1 + 80.0 * x2 + 60.0 * x3 + 40.0 * x4;
      break;
    }
    case 2: {
      const double x3 = x(2), x4 = x(3);
      g.g0 = -3.0 + 10.0 * std::log(x1 + 1.0) + 24.0 * x2 * x2 +
             15.0 * std::exp(x3) + 20.0 / (x4 + 3.0);
      g.g1 = 20.0 * std::exp(x1 + 2.0) + 17.0 / (x1 + 1.0) + 10.0 * x2 * x2;
      break;
    }
    case 3: {
      const double x3 = x(2), x4 = x(3);
      g.g0 = 5.0 + 42.0 * x1 * x2 / (x1 + x2 + 2.0) + 83.0 * x1 * x1 * (x2 + x3);
      g.g1 = 2.0 + 30.0 * (x2 + x4) + 75.0 * x2 * x2 / std::exp(x1 + 2.0);
      break;
    }
    case 4: {
      const double base = (20.0 * x1 + 30.0 * x2) * s_var;
      g.g0 = 5.0 + base + (s_var > 0 ? 50.0 * std::log(x1 + 1.0) : 0.0);
      g.g1 = 5.0 + base + (s_var < 0 ? 65.0 * std::exp(x2) : 0.0);
      break;
    }
  }
  return g;
}

}  // namespace

Trial generate(const ModelSpec& spec, int rep) {
  check_spec(spec);
  const int n = spec.n, p = spec.p, id = spec.model_id;

  Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(rep), 1));
  const std::shared_ptr<const Matrix> root = cov_sqrt(id == 3 ? 1 : 0, p - 4);

  Trial t;
  t.x.resize(n, p);
  t.y.resize(n);
  t.arm.assign(n, 0);
  t.stratum.assign(n, 0);
  Vector y0(n), y1(n);

  const std::vector<double> strat_probs =
      id == 3 ? std::vector<double>{0.4, 0.6}
              : (id == 4 ? std::vector<double>{0.5, 0.5}
                         : std::vector<double>{0.2, 0.3, 0.3, 0.2});

  for (int i = 0; i < n; ++i) {
    auto x = t.x.row(i);
    x(0) = rng.beta(3, 4);
    x(1) = rng.uniform(-2.0, 2.0);
    if (id == 3) {
      x(2) = rng.normal();
      x(3) = rng.uniform(0.0, 2.0);
      if (p > 4) {
        Vector z(p - 4);
        for (int j = 0; j < p - 4; ++j) z(j) = rng.normal();
        x.tail(p - 4) = (*root * z).transpose();
      }
    } else {
      draw_tail_like_model1(rng, *root, x);
    }

    t.stratum[i] = rng.categorical(strat_probs) + 1;
    const double s_var = id == 4 ? (t.stratum[i] == 1 ? 1.0 : -1.0) : 0.0;
    const Potential g = outcome_means(id, t.x.row(i), s_var);

    double e0, e1;
    if (id == 3) {
      e0 = rng.student_t2();
      e1 = 3.0 * rng.student_t2();
    } else {
      e0 = rng.normal();
      e1 = 3.0 * rng.normal();
    }
    y0(i) = g.g0 + e0;
    y1(i) = g.g1 + e1;
  }

  // Models 2 and 4: interact a random third of the noise columns with X1 or
  // X2. Outcomes above already used the pristine columns, so the estimand
  // does not depend on this selection.
  if (id == 2 || id == 4) {
    Rng irng(spec.freeze_interactions
                 ? derive_seed(spec.seed, 0, 3)
                 : derive_seed(spec.seed, static_cast<std::uint64_t>(rep), 3));
    const int extra = p - 2;
    const int pick = p / 3;
    std::vector<int> cols(extra);
    for (int j = 0; j < extra; ++j) cols[j] = 2 + j;
    irng.shuffle(cols);
    for (int j = 0; j < pick; ++j) {
      const int c = cols[j];
      const int mult = irng.bernoulli(0.5) ? 0 : 1;
      for (int i = 0; i < n; ++i) t.x(i, c) *= t.x(i, mult);
    }
  }

  DesignSpec design = spec.design;
  design.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(rep), 2);
  t.arm = assign(design, t.stratum);
  for (int i = 0; i < n; ++i) t.y(i) = t.arm[i] == 1 ? y1(i) : y0(i);

  const int num_strata = static_cast<int>(strat_probs.size());
  for (int k = 1; k <= num_strata; ++k) t.stratum_names.push_back(std::to_string(k));
  for (int j = 1; j <= p; ++j) t.covariate_names.push_back("x" + std::to_string(j));
  return t;
}

std::pair<double, double> true_tau_mc(int model_id, std::uint64_t seed,
                                      long long draws) {
  if (model_id < 1 || model_id > 4) throw InvalidInput("model_id must be 1..4");
  if (draws < 2) throw InvalidInput("true_tau_mc: draws must be >= 2");
  Rng rng(seed);
  double mean = 0.0, m2 = 0.0;
  Eigen::RowVectorXd x(4);
  for (long long i = 0; i < draws; ++i) {
    x(0) = rng.beta(3, 4);
    x(1) = rng.uniform(-2.0, 2.0);
    double s_var = 0.0;
    switch (model_id) {
      case 1:
      case 2:
        x(2) = rng.bernoulli(0.5) ? 1.0 : -1.0;
        x(3) = rng.bernoulli(0.6) ? 3.0 : 5.0;
        break;
      case 3:
        x(2) = rng.normal();
        x(3) = rng.uniform(0.0, 2.0);
        break;
      case 4:
        x(2) = 0.0;
        x(3) = 0.0;
        s_var = rng.bernoulli(0.5) ? 1.0 : -1.0;
        break;
    }
    const Potential g = outcome_means(model_id, x, s_var);
    const double diff = g.g1 - g.g0;
    const double delta = diff - mean;
    mean += delta / (i + 1);
    m2 += delta * (diff - mean);
  }
  const double var = m2 / (draws - 1);
  return {mean, std::sqrt(var / draws)};
}

double true_tau(int model_id) {
  if (model_id < 1 || model_id > 4) throw InvalidInput("model_id must be 1..4");
  static std::mutex mu;
  static std::map<int, double> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(model_id);
  if (it != cache.end()) return it->second;
  const double v = true_tau_mc(model_id, 0xA11CEBEEFULL, 10'000'000LL).first;
  cache[model_id] = v;
  return v;
}

SimSummary run_study(const ModelSpec& spec, int reps,
                     const std::vector<EstimatorDef>& estimators, int threads) {
  check_spec(spec);
  if (reps < 1) throw InvalidInput("run_study: reps must be >= 1");
  if (estimators.empty()) throw InvalidInput("run_study: no estimators");

  const double tau_star = true_tau(spec.model_id);
  const std::size_t m = estimators.size();

  struct Slot {
    double tau = 0.0, se = 0.0, lo = 0.0, hi = 0.0;
    bool ok = false;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(reps) * m);

  // Warm shared caches (covariance roots) before the team starts.
  generate(spec, 0);

  parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t r) {
    const Trial t = generate(spec, static_cast<int>(r));
    for (std::size_t e = 0; e < m; ++e) {
      Slot& out = slots[r * m + e];
      try {
        const AteReport rep = estimators[e].fn(t);
        out.tau = rep.tau_hat;
        out.se = rep.se;
        out.lo = rep.ci_lo;
        out.hi = rep.ci_hi;
        out.ok = true;
      } catch (const Error&) {
        out.ok = false;
      }
    }
  });

  SimSummary s;
  s.model_id = spec.model_id;
  s.n = spec.n;
  s.reps = reps;
  s.true_tau = tau_star;
  for (std::size_t e = 0; e < m; ++e) {
    EstimatorSummary row;
    row.name = estimators[e].name;
    double sum = 0.0;
    int used = 0, covered = 0;
    for (int r = 0; r < reps; ++r) {
      const Slot& sl = slots[static_cast<std::size_t>(r) * m + e];
      if (!sl.ok) continue;
      sum += sl.tau;
      ++used;
    }
    row.reps_used = used;
    row.failures = reps - used;
    if (used > 0) {
      const double mean = sum / used;
      double ss = 0.0, se_sum = 0.0;
      for (int r = 0; r < reps; ++r) {
        const Slot& sl = slots[static_cast<std::size_t>(r) * m + e];
        if (!sl.ok) continue;
        ss += (sl.tau - mean) * (sl.tau - mean);
        se_sum += sl.se;
        if (sl.lo <= tau_star && tau_star <= sl.hi) ++covered;
      }
      row.bias = mean - tau_star;
      row.sd = used > 1 ? std::sqrt(ss / (used - 1)) : 0.0;
      row.mean_se = se_sum / used;
      row.coverage = static_cast<double>(covered) / used;
    }
    s.rows.push_back(row);
  }
  return s;
}

void write_summary_csv(const SimSummary& s, std::ostream& os) {
  os << "estimator,bias,sd,se,cp,reps,failures\n";
  char buf[256];
  for (const auto& r : s.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.12g,%.12g,%.12g,%.12g,%d,%d\n",
                  r.name.c_str(), r.bias, r.sd, r.mean_se, r.coverage, r.reps_used,
                  r.failures);
    os << buf;
  }
}

std::string format_summary_table(const SimSummary& s) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "model %d  n %d  reps %d  true tau %.6f\n",
                s.model_id, s.n, s.reps, s.true_tau);
  os << buf;
  std::snprintf(buf, sizeof(buf), "%-12s %12s %12s %12s %8s %6s %9s\n", "estimator",
                "bias", "sd", "se", "cp", "reps", "failures");
  os << buf;
  for (const auto& r : s.rows) {
    std::snprintf(buf, sizeof(buf), "%-12s %12.4f %12.4f %12.4f %8.3f %6d %9d\n",
                  r.name.c_str(), r.bias, r.sd, r.mean_se, r.coverage, r.reps_used,
                  r.failures);
    os << buf;
  }
  return os.str();
}

}  // namespace calib
