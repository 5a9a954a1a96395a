#include "calib/proxy.hpp"

#include "calib/rng.hpp"

#include <algorithm>
#include <cmath>

namespace calib {

namespace {

// Rows of each (stratum, arm) cell, and of each arm pooled across strata.
struct CellIndex {
  std::vector<std::vector<int>> cell[2];  // [arm][stratum] -> rows
  std::vector<int> pooled[2];             // [arm] -> rows
};

CellIndex index_cells(const Trial& t, int num_strata) {
  CellIndex ix;
  ix.cell[0].assign(num_strata + 1, {});
  ix.cell[1].assign(num_strata + 1, {});
  for (int i = 0; i < t.n(); ++i) {
    ix.cell[t.arm[i]][t.stratum[i]].push_back(i);
    ix.pooled[t.arm[i]].push_back(i);
  }
  return ix;
}

Matrix rows_of(const Matrix& x, const std::vector<int>& rows) {
  Matrix out(rows.size(), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = x.row(rows[i]);
  return out;
}

Vector elems_of(const Vector& y, const std::vector<int>& rows) {
  Vector out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out(i) = y(rows[i]);
  return out;
}

// Fits one (stratum, arm) cell, falling back to the pooled arm fit when the
// cell is too small to support any fit of its own.
Model fit_cell(const Trial& t, const CellIndex& ix, const LearnerSpec& spec,
               int k, int a, std::vector<std::string>& warnings) {
  const std::vector<int>* rows = &ix.cell[a][k];
  LearnerSpec cell_spec = spec;
  cell_spec.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(k),
                               static_cast<std::uint64_t>(a));
  if (rows->size() < 2) {
    warnings.push_back("stratum " + std::to_string(k) + " arm " + std::to_string(a) +
                       " has " + std::to_string(rows->size()) +
                       " units; pooled fit used");
    rows = &ix.pooled[a];
  }
  return fit(cell_spec, rows_of(t.x, *rows), elems_of(t.y, *rows));
}

void require_covariates(const Trial& t, const char* who) {
  if (t.x.cols() == 0)
    throw InvalidInput(std::string(who) + ": trial has no covariates");
}

}  // namespace

static void check_pair(const Trial& train, const Trial& eval, const char* who) {
  train.validate();
  eval.validate();
  if (train.x.cols() == 0)
    throw InvalidInput(std::string(who) + ": trial has no covariates");
  if (train.x.cols() != eval.x.cols())
    throw InvalidInput(std::string(who) + ": covariate count mismatch");
  int k_eval = 0;
  for (int b : eval.stratum) k_eval = std::max(k_eval, b);
  int k_train = 0;
  for (int b : train.stratum) k_train = std::max(k_train, b);
  if (k_eval > k_train)
    throw InvalidInput(std::string(who) + ": eval uses strata absent from train");
}

ProxyMatrix within_stratum_proxy_at(const Trial& train, const Trial& eval,
                                    const LearnerSpec& spec) {
  check_pair(train, eval, "within_stratum_proxy");
  StratumStats stats = stratum_stats(train);  // also rejects single-arm strata
  const int num_strata = stats.num_strata();
  const CellIndex ix = index_cells(train, num_strata);

  std::vector<std::vector<int>> eval_members(num_strata + 1);
  for (int i = 0; i < eval.n(); ++i) eval_members[eval.stratum[i]].push_back(i);

  ProxyMatrix pm;
  pm.values.resize(eval.n(), 2);
  for (int k = 1; k <= num_strata; ++k) {
    const auto& members = eval_members[k];
    if (members.empty()) continue;
    const Matrix xk = rows_of(eval.x, members);
    for (int a : {1, 0}) {
      const Model m = fit_cell(train, ix, spec, k, a, pm.warnings);
      const Vector pred = m.predict(xk);
      const int col = a == 1 ? 0 : 1;
      for (std::size_t j = 0; j < members.size(); ++j)
        pm.values(members[j], col) = pred(j);
    }
  }
  const std::string ln = learner_name(spec.kind);
  pm.labels = {"h1:" + ln, "h0:" + ln};
  pm.builder = "within:" + ln;
  return pm;
}

ProxyMatrix within_stratum_proxy(const Trial& t, const LearnerSpec& spec) {
  return within_stratum_proxy_at(t, t, spec);
}

ProxyMatrix cross_stratum_proxy_at(const Trial& train, const Trial& eval,
                                   const LearnerSpec& spec) {
  check_pair(train, eval, "cross_stratum_proxy");
  StratumStats stats = stratum_stats(train);
  const int num_strata = stats.num_strata();
  const CellIndex ix = index_cells(train, num_strata);

  ProxyMatrix pm;
  pm.values.resize(eval.n(), 2 * num_strata);
  const std::string ln = learner_name(spec.kind);
  for (int k = 1; k <= num_strata; ++k) {
    for (int a : {1, 0}) {
      const Model m = fit_cell(train, ix, spec, k, a, pm.warnings);
      const int col = 2 * (k - 1) + (a == 1 ? 0 : 1);
      pm.values.col(col) = m.predict(eval.x);
      pm.labels.push_back("h" + std::to_string(a) + "[" + std::to_string(k) + "]:" + ln);
    }
  }
  pm.builder = "cross:" + ln;
  return pm;
}

ProxyMatrix cross_stratum_proxy(const Trial& t, const LearnerSpec& spec) {
  return cross_stratum_proxy_at(t, t, spec);
}

ProxyMatrix raw_covariate_proxy(const Trial& t, const std::vector<int>& columns,
                                const std::vector<ColumnTransform>& transforms) {
  t.validate();
  if (columns.empty()) throw InvalidInput("raw_covariate_proxy: no columns chosen");
  if (!transforms.empty() && transforms.size() != columns.size())
    throw InvalidInput("raw_covariate_proxy: transforms length differs from columns");

  ProxyMatrix pm;
  pm.values.resize(t.n(), columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const int c = columns[j];
    if (c < 0 || c >= t.num_covariates())
      throw InvalidInput("raw_covariate_proxy: column index " + std::to_string(c) +
                         " out of range");
    const std::string base = t.covariate_names.empty()
                                 ? "x" + std::to_string(c + 1)
                                 : t.covariate_names[c];
    ColumnTransform tr;
    if (!transforms.empty()) tr = transforms[j];
    if (tr.shift == 0.0 && tr.exponent == 1.0) {
      pm.values.col(j) = t.x.col(c);
      pm.labels.push_back(base);
      continue;
    }
    const bool integral_exp = tr.exponent == std::floor(tr.exponent);
    for (int i = 0; i < t.n(); ++i) {
      const double b = t.x(i, c) + tr.shift;
      if (!integral_exp && b <= 0.0)
        throw InvalidInput("raw_covariate_proxy: (" + base + "+" +
                           std::to_string(tr.shift) + ") is non-positive at row " +
                           std::to_string(i + 1) +
                           "; fractional exponent undefined");
      const double v = std::pow(b, tr.exponent);
      if (!std::isfinite(v))
        throw InvalidInput("raw_covariate_proxy: transform overflows at row " +
                           std::to_string(i + 1));
      pm.values(i, j) = v;
    }
    std::string lbl = "(" + base;
    if (tr.shift != 0.0) lbl += (tr.shift > 0 ? "+" : "") + std::to_string(tr.shift);
    lbl += ")^" + std::to_string(tr.exponent);
    pm.labels.push_back(lbl);
  }
  pm.builder = "raw";
  return pm;
}

ProxyMatrix external_proxy(const Trial& t, const Matrix& external_x,
                           const Vector& external_y, const LearnerSpec& spec,
                           const std::vector<int>& columns) {
  t.validate();
  require_covariates(t, "external_proxy");
  if (external_x.rows() == 0) throw InvalidInput("external_proxy: empty external data");

  std::vector<int> cols = columns;
  if (cols.empty()) {
    if (external_x.cols() != t.x.cols())
      throw InvalidInput("external_proxy: external column count differs from trial");
    cols.resize(t.x.cols());
    for (std::size_t j = 0; j < cols.size(); ++j) cols[j] = static_cast<int>(j);
  } else if (static_cast<int>(cols.size()) != static_cast<int>(external_x.cols())) {
    throw InvalidInput("external_proxy: columns length differs from external design");
  }
  for (int c : cols)
    if (c < 0 || c >= t.num_covariates())
      throw InvalidInput("external_proxy: trial column out of range");

  const Model m = fit(spec, external_x, external_y);
  Matrix eval(t.n(), cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) eval.col(j) = t.x.col(cols[j]);

  ProxyMatrix pm;
  pm.values.resize(t.n(), 1);
  pm.values.col(0) = m.predict(eval);
  pm.labels = {"external:" + learner_name(spec.kind)};
  pm.builder = "external:" + learner_name(spec.kind);
  return pm;
}

ProxyMatrix stack_proxies(const std::vector<ProxyMatrix>& parts) {
  if (parts.empty()) throw InvalidInput("stack_proxies: nothing to stack");
  const Eigen::Index n = parts[0].values.rows();
  Eigen::Index d = 0;
  for (const auto& p : parts) {
    if (p.values.rows() != n)
      throw InvalidInput("stack_proxies: row count mismatch");
    d += p.values.cols();
  }
  ProxyMatrix pm;
  pm.values.resize(n, d);
  pm.builder = "stack(";
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    pm.values.middleCols(at, parts[i].values.cols()) = parts[i].values;
    at += parts[i].values.cols();
    pm.labels.insert(pm.labels.end(), parts[i].labels.begin(), parts[i].labels.end());
    pm.warnings.insert(pm.warnings.end(), parts[i].warnings.begin(),
                       parts[i].warnings.end());
    pm.builder += (i ? "+" : "") + parts[i].builder;
  }
  pm.builder += ")";
  return pm;
}

std::vector<std::vector<int>> cross_fit_split(const Trial& t, int folds,
                                              std::uint64_t seed) {
  t.validate();
  if (folds < 2) throw InvalidInput("cross_fit_split: folds must be >= 2");
  int num_strata = 0;
  for (int b : t.stratum) num_strata = std::max(num_strata, b);
  const CellIndex ix = index_cells(t, num_strata);

  std::vector<std::vector<int>> out(folds);
  for (int k = 1; k <= num_strata; ++k) {
    for (int a : {0, 1}) {
      std::vector<int> rows = ix.cell[a][k];
      if (static_cast<int>(rows.size()) < folds)
        throw DegenerateStratum(
            k, "stratum " + std::to_string(k) + " arm " + std::to_string(a) +
                   " has " + std::to_string(rows.size()) + " units; cannot form " +
                   std::to_string(folds) + " folds");
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k),
                          static_cast<std::uint64_t>(a)));
      rng.shuffle(rows);
      for (std::size_t j = 0; j < rows.size(); ++j)
        out[j % folds].push_back(rows[j]);
    }
  }
  for (auto& f : out) std::sort(f.begin(), f.end());
  return out;
}

}  // namespace calib
