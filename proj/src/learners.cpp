#include "calib/learners.hpp"

#include "calib/linalg.hpp"
#include "calib/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <vector>

namespace calib {

LearnerKind parse_learner(const std::string& name) {
  if (name == "ols") return LearnerKind::Ols;
  if (name == "ridge") return LearnerKind::Ridge;
  if (name == "knn") return LearnerKind::Knn;
  if (name == "tree") return LearnerKind::Tree;
  if (name == "bagged" || name == "bagged-trees") return LearnerKind::BaggedTrees;
  throw InvalidInput("unknown learner: " + name);
}

std::string learner_name(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::Ols: return "ols";
    case LearnerKind::Ridge: return "ridge";
    case LearnerKind::Knn: return "knn";
    case LearnerKind::Tree: return "tree";
    case LearnerKind::BaggedTrees: return "bagged";
  }
  return "?";
}

namespace detail {

struct ModelImpl {
  virtual ~ModelImpl() = default;
  virtual double predict_one(const Vector& x) const = 0;
  virtual int num_features() const = 0;
};

// ---- linear family ----------------------------------------------------

struct LinearModel final : ModelImpl {
  double intercept = 0.0;
  Vector coef;  // length p
  double predict_one(const Vector& x) const override {
    return intercept + coef.dot(x);
  }
  int num_features() const override { return static_cast<int>(coef.size()); }
};

// ---- k nearest neighbours ----------------------------------------------

struct KnnModel final : ModelImpl {
  Matrix x;
  Vector y;
  int k = 1;
  double predict_one(const Vector& q) const override {
    const int n = static_cast<int>(x.rows());
    const int kk = std::min(k, n);
    std::vector<std::pair<double, int>> d(n);
    for (int i = 0; i < n; ++i)
      d[i] = {(x.row(i).transpose() - q).squaredNorm(), i};
    // Distance ties broken by row index for a deterministic neighbour set.
    std::partial_sort(d.begin(), d.begin() + kk, d.end());
    double s = 0.0;
    for (int i = 0; i < kk; ++i) s += y(d[i].second);
    return s / kk;
  }
  int num_features() const override { return static_cast<int>(x.cols()); }
};

// ---- regression tree -----------------------------------------------------

struct TreeNode {
  int feature = -1;  // -1: leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  double value = 0.0;
};

struct TreeModel final : ModelImpl {
  std::vector<TreeNode> nodes;
  int p = 0;
  double predict_one(const Vector& q) const override {
    int at = 0;
    while (nodes[at].feature >= 0)
      at = q(nodes[at].feature) < nodes[at].threshold ? nodes[at].left
                                                      : nodes[at].right;
    return nodes[at].value;
  }
  int num_features() const override { return p; }
};

struct TreeBuilder {
  const Matrix& x;
  const Vector& y;
  int max_depth;
  int min_leaf;
  std::vector<TreeNode> nodes;

  int build(std::vector<int> rows, int depth) {
    const int m = static_cast<int>(rows.size());
    double mean = 0.0;
    for (int r : rows) mean += y(r);
    mean /= m;
    double sse = 0.0;
    for (int r : rows) {
      const double z = y(r) - mean;
      sse += z * z;
    }

    const int id = static_cast<int>(nodes.size());
    nodes.push_back(TreeNode{});
    nodes[id].value = mean;
    if (depth >= max_depth || m < 2 * min_leaf || sse <= 0.0) return id;

    // Variance-reduction split search. Features are scanned in ascending
    // order and candidate thresholds in ascending order, and only strictly
    // better costs replace the incumbent, so ties resolve to the lowest
    // feature index and then the lowest threshold.
    int best_feature = -1, best_pos = -1;
    double best_cost = sse;
    std::vector<int> order(rows);
    std::vector<int> best_order;
    std::vector<double> prefix_z(m + 1), prefix_z2(m + 1);
    for (int f = 0; f < x.cols(); ++f) {
      std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (x(a, f) != x(b, f)) return x(a, f) < x(b, f);
        return a < b;
      });
      prefix_z[0] = prefix_z2[0] = 0.0;
      for (int i = 0; i < m; ++i) {
        const double z = y(order[i]) - mean;  // centered for stable SSE sums
        prefix_z[i + 1] = prefix_z[i] + z;
        prefix_z2[i + 1] = prefix_z2[i] + z * z;
      }
      for (int s = min_leaf; s <= m - min_leaf; ++s) {
        if (x(order[s - 1], f) == x(order[s], f)) continue;
        const double sl = prefix_z[s], sl2 = prefix_z2[s];
        const double sr = prefix_z[m] - sl, sr2 = prefix_z2[m] - sl2;
        const double cost = (sl2 - sl * sl / s) + (sr2 - sr * sr / (m - s));
        if (cost < best_cost) {
          best_cost = cost;
          best_feature = f;
          best_pos = s;
          best_order = order;
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<int> left_rows(best_order.begin(), best_order.begin() + best_pos);
    std::vector<int> right_rows(best_order.begin() + best_pos, best_order.end());
    nodes[id].feature = best_feature;
    nodes[id].threshold = 0.5 * (x(best_order[best_pos - 1], best_feature) +
                                 x(best_order[best_pos], best_feature));
    const int l = build(std::move(left_rows), depth + 1);
    const int r = build(std::move(right_rows), depth + 1);
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  }
};

static std::shared_ptr<TreeModel> fit_tree(const Matrix& x, const Vector& y,
                                           std::vector<int> rows, int max_depth,
                                           int min_leaf) {
  TreeBuilder b{x, y, max_depth, min_leaf, {}};
  b.build(std::move(rows), 0);
  auto out = std::make_shared<TreeModel>();
  out->nodes = std::move(b.nodes);
  out->p = static_cast<int>(x.cols());
  return out;
}

struct BaggedModel final : ModelImpl {
  std::vector<std::shared_ptr<TreeModel>> trees;
  int p = 0;
  double predict_one(const Vector& q) const override {
    double s = 0.0;
    for (const auto& t : trees) s += t->predict_one(q);
    return s / static_cast<double>(trees.size());
  }
  int num_features() const override { return p; }
};

}  // namespace detail

Model::Model(std::shared_ptr<const detail::ModelImpl> impl) : impl_(std::move(impl)) {}

double Model::predict_one(const Vector& x) const {
  if (static_cast<int>(x.size()) != impl_->num_features())
    throw InvalidInput("predict: feature count mismatch");
  return impl_->predict_one(x);
}

Vector Model::predict(const Matrix& x) const {
  if (static_cast<int>(x.cols()) != impl_->num_features())
    throw InvalidInput("predict: feature count mismatch");
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    out(i) = impl_->predict_one(x.row(i).transpose());
  return out;
}

int Model::num_features() const { return impl_->num_features(); }

// ---- fitting -------------------------------------------------------------

static std::shared_ptr<detail::LinearModel> fit_ols(const LearnerSpec& spec,
                                                    const Matrix& x, const Vector& y) {
  const Eigen::Index n = x.rows(), p = x.cols();
  Matrix b(n, p + 1);
  b.col(0).setOnes();
  b.rightCols(p) = x;
  const Matrix gram = b.transpose() * b;
  const Vector rhs = b.transpose() * y;
  Vector beta;
  if (spec.ridge_fallback) {
    const double pen = 1e-8 * gram.trace() / static_cast<double>(gram.cols());
    Matrix g = gram;
    g.diagonal().array() += pen;
    beta = Eigen::LDLT<Matrix>(g).solve(rhs);
  } else {
    // Minimum-norm solution; rank deficiency (collinear columns, n < p+1)
    // is handled by the truncated SVD.
    beta = pseudo_inverse(gram) * rhs;
  }
  auto m = std::make_shared<detail::LinearModel>();
  m->intercept = beta(0);
  m->coef = beta.tail(p);
  return m;
}

static std::shared_ptr<detail::LinearModel> fit_ridge(const LearnerSpec& spec,
                                                      const Matrix& x, const Vector& y) {
  const Eigen::Index p = x.cols();
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Matrix xc = x.rowwise() - x_mean;
  const Vector yc = y.array() - y_mean;
  Matrix g = xc.transpose() * xc;
  g.diagonal().array() += spec.ridge_penalty;
  Vector coef;
  if (spec.ridge_penalty > 0.0) {
    coef = Eigen::LDLT<Matrix>(g).solve(xc.transpose() * yc);
  } else {
    coef = pseudo_inverse(g) * (xc.transpose() * yc);
  }
  auto m = std::make_shared<detail::LinearModel>();
  m->coef = coef;
  m->intercept = y_mean - x_mean.transpose().dot(coef);
  return m;
}

Model fit(const LearnerSpec& spec, const Matrix& x, const Vector& y) {
  if (x.rows() == 0) throw InvalidInput("fit: no rows");
  if (x.rows() != y.size()) throw InvalidInput("fit: x rows != y length");
  if (!all_finite(x) || !all_finite(y)) throw InvalidInput("fit: non-finite data");
  if (spec.ridge_penalty < 0.0) throw InvalidInput("fit: ridge_penalty < 0");
  if (spec.k < 1) throw InvalidInput("fit: k < 1");
  if (spec.max_depth < 1) throw InvalidInput("fit: max_depth < 1");
  if (spec.min_leaf < 1) throw InvalidInput("fit: min_leaf < 1");
  if (spec.tree_count < 1) throw InvalidInput("fit: tree_count < 1");

  const int n = static_cast<int>(x.rows());
  switch (spec.kind) {
    case LearnerKind::Ols:
      return Model(fit_ols(spec, x, y));
    case LearnerKind::Ridge:
      return Model(fit_ridge(spec, x, y));
    case LearnerKind::Knn: {
      auto m = std::make_shared<detail::KnnModel>();
      m->x = x;
      m->y = y;
      m->k = spec.k;
      return Model(m);
    }
    case LearnerKind::Tree: {
      std::vector<int> rows(n);
      for (int i = 0; i < n; ++i) rows[i] = i;
      return Model(detail::fit_tree(x, y, std::move(rows), spec.max_depth, spec.min_leaf));
    }
    case LearnerKind::BaggedTrees: {
      auto m = std::make_shared<detail::BaggedModel>();
      m->p = static_cast<int>(x.cols());
      m->trees.reserve(spec.tree_count);
      for (int t = 0; t < spec.tree_count; ++t) {
        std::vector<int> rows(n);
        if (spec.bootstrap) {
          Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(t)));
          for (int i = 0; i < n; ++i) rows[i] = rng.below(n);
        } else {
          for (int i = 0; i < n; ++i) rows[i] = i;
        }
        m->trees.push_back(detail::fit_tree(x, y, std::move(rows), spec.max_depth,
                                            spec.min_leaf));
      }
      return Model(m);
    }
  }
  throw InvalidInput("fit: unknown learner kind");
}

}  // namespace calib
