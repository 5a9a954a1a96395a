#pragma once

#include "calib/design.hpp"
#include "calib/estimator.hpp"
#include "calib/trial.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace calib {

// One of four synthetic trial generators.
//   1  linear outcome models, 4 informative covariates, 4 strata
//   2  nonlinear outcomes, interacted noise covariates, 4 strata
//   3  nonlinear outcomes with heavy-tailed (t_2) noise, 2 strata
//   4  stratum-heterogeneous outcomes driven by the stratum variable itself
struct ModelSpec {
  int model_id = 1;
  int n = 1000;
  int p = 30;
  DesignSpec design;
  std::uint64_t seed = 0;
  // Models 2/4 re-draw which noise columns get interacted each replication;
  // set to pin one selection across replications.
  bool freeze_interactions = false;
};

// Replication `rep` of the study: covariates, potential outcomes, stratum
// labels and the design's arm assignment, all from streams derived from
// (spec.seed, rep) so any replication can be regenerated in isolation.
Trial generate(const ModelSpec& spec, int rep);

// E[Y(1) - Y(0)] for the model, by a 1e7-draw Monte Carlo under a fixed
// internal seed; the value is cached per model for the process lifetime.
double true_tau(int model_id);

// Uncached oracle with caller-chosen seed and draw count; .second is the
// Monte Carlo standard error.
std::pair<double, double> true_tau_mc(int model_id, std::uint64_t seed,
                                      long long draws);

struct EstimatorDef {
  std::string name;
  std::function<AteReport(const Trial&)> fn;
};

struct EstimatorSummary {
  std::string name;
  double bias = 0.0;     // mean(tau_hat) - true tau
  double sd = 0.0;       // sample sd of tau_hat
  double mean_se = 0.0;  // mean reported standard error
  double coverage = 0.0; // fraction of intervals covering true tau
  int reps_used = 0;
  int failures = 0;
};

struct SimSummary {
  int model_id = 0;
  int n = 0;
  int reps = 0;
  double true_tau = 0.0;
  std::vector<EstimatorSummary> rows;
};

// Runs `reps` replications and folds the per-replication results in index
// order. threads > 1 fans replications across an OpenMP team; threads <= 1 is
// the serial reference. Both paths produce identical summaries because every
// replication derives its own streams and writes only its own slot.
// Estimator exceptions are counted as failures, not propagated.
SimSummary run_study(const ModelSpec& spec, int reps,
                     const std::vector<EstimatorDef>& estimators, int threads = 1);

// estimator,bias,sd,se,cp,reps,failures — one row per estimator.
void write_summary_csv(const SimSummary& s, std::ostream& os);
std::string format_summary_table(const SimSummary& s);

}  // namespace calib
