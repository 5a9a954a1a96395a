#pragma once

#include "calib/learners.hpp"
#include "calib/trial.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace calib {

// Columns of auxiliary information xi(X_i), one row per trial unit. Any
// real-valued columns work: learner predictions, raw covariates, transformed
// covariates, predictions from an external source.
struct ProxyMatrix {
  Matrix values;  // n x d
  std::vector<std::string> labels;
  std::string builder;
  std::vector<std::string> warnings;
};

// Two columns: predictions of the (stratum, arm)-local fits, each unit scored
// by its own stratum's treated fit (column 0) and control fit (column 1).
// A cell with fewer than two units falls back to the pooled fit for that arm
// and records a warning.
ProxyMatrix within_stratum_proxy(const Trial& t, const LearnerSpec& spec);

// Same columns for the units of `eval`, but with every (stratum, arm) model
// fit on `train` — the cross-fitting workhorse. The two trials must share
// stratum coding.
ProxyMatrix within_stratum_proxy_at(const Trial& train, const Trial& eval,
                                    const LearnerSpec& spec);

// 2K columns: every stratum's treated and control fits evaluated at all
// units, ordered h1[1], h0[1], h1[2], h0[2], ...
ProxyMatrix cross_stratum_proxy(const Trial& t, const LearnerSpec& spec);

ProxyMatrix cross_stratum_proxy_at(const Trial& train, const Trial& eval,
                                   const LearnerSpec& spec);

// Optional per-column map x -> (x + shift)^exponent.
struct ColumnTransform {
  double shift = 0.0;
  double exponent = 1.0;
};

// Plain covariate columns (0-based indices), optionally transformed.
// transforms must be empty or match columns in length.
ProxyMatrix raw_covariate_proxy(const Trial& t, const std::vector<int>& columns,
                                const std::vector<ColumnTransform>& transforms = {});

// Fit on an external (x, y) source, score the trial units. columns selects
// which trial covariates line up with the external design (empty = all).
ProxyMatrix external_proxy(const Trial& t, const Matrix& external_x,
                           const Vector& external_y, const LearnerSpec& spec,
                           const std::vector<int>& columns = {});

// Column-wise concatenation; all parts must have the same row count.
ProxyMatrix stack_proxies(const std::vector<ProxyMatrix>& parts);

// Unit indices per fold. Each (stratum, arm) cell is shuffled with its own
// derived stream and dealt round-robin, so every fold keeps both arms of
// every stratum; a cell smaller than the fold count is an error.
std::vector<std::vector<int>> cross_fit_split(const Trial& t, int folds,
                                              std::uint64_t seed);

}  // namespace calib
