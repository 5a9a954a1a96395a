#pragma once

#include "calib/common.hpp"

#include <cstdint>
#include <memory>
#include <string>

namespace calib {

enum class LearnerKind { Ols, Ridge, Knn, Tree, BaggedTrees };

LearnerKind parse_learner(const std::string& name);
std::string learner_name(LearnerKind kind);

struct LearnerSpec {
  LearnerKind kind = LearnerKind::Ols;
  double ridge_penalty = 1.0;  // ridge
  int k = 5;                   // knn (clamped to the sample size)
  int max_depth = 6;           // tree / bagged
  int min_leaf = 10;           // tree / bagged
  int tree_count = 50;         // bagged
  bool bootstrap = true;       // bagged: resample rows per tree
  // ols only: instead of the pseudoinverse route for a rank-deficient Gram,
  // fall back to ridge with penalty 1e-8 * trace(Gram) / cols.
  bool ridge_fallback = false;
  std::uint64_t seed = 0;
};

namespace detail {
struct ModelImpl;
}

// Immutable fitted model; cheap to copy.
class Model {
 public:
  Vector predict(const Matrix& x) const;
  double predict_one(const Vector& x) const;
  int num_features() const;

  explicit Model(std::shared_ptr<const detail::ModelImpl> impl);

 private:
  std::shared_ptr<const detail::ModelImpl> impl_;
};

// Fits spec on (x, y). Deterministic given spec.seed. Throws InvalidInput on
// shape mismatches, empty data, non-finite entries, or bad hyperparameters.
Model fit(const LearnerSpec& spec, const Matrix& x, const Vector& y);

}  // namespace calib
