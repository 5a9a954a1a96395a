// Times the simulation study once on the serial reference path and once on the
// OpenMP path, checks the two summaries byte-for-byte, and reports the speedup.

#include "calib/parallel.hpp"
#include "calib/rng.hpp"
#include "calib/sim.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <string>

namespace {

std::string summary_bytes(const calib::SimSummary& s) {
  std::ostringstream os;
  calib::write_summary_csv(s, os);
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  int model = 1, n = 1000, reps = 50;
  if (argc > 1) model = std::atoi(argv[1]);
  if (argc > 2) n = std::atoi(argv[2]);
  if (argc > 3) reps = std::atoi(argv[3]);

  calib::ModelSpec spec;
  spec.model_id = model;
  spec.n = n;
  spec.seed = 20240915;

  std::vector<calib::EstimatorDef> ests;
  ests.push_back({"sdim", [](const calib::Trial& t) { return calib::sdim_ate(t); }});
  ests.push_back({"cal", [](const calib::Trial& t) {
                    calib::LearnerSpec ls;
                    ls.seed = calib::derive_seed(7, calib::trial_fingerprint(t));
                    return calib::calibrate_ate(t, calib::within_stratum_proxy(t, ls));
                  }});

  const int threads = calib::default_thread_count();
  std::printf("model %d, n %d, reps %d, %d worker thread(s)\n", model, n, reps,
              threads);

  // The first study call integrates the model's true effect and caches it;
  // pay that once up front so the timings compare only the replication loops.
  calib::true_tau(model);

  auto t0 = std::chrono::steady_clock::now();
  const calib::SimSummary serial = calib::run_study(spec, reps, ests, 1);
  const double t_serial = seconds_since(t0);
  std::printf("serial reference : %8.3f s  (%.1f reps/s)\n", t_serial,
              reps / t_serial);

  t0 = std::chrono::steady_clock::now();
  const calib::SimSummary parallel = calib::run_study(spec, reps, ests, threads);
  const double t_parallel = seconds_since(t0);
  std::printf("openmp (%d)       : %8.3f s  (%.1f reps/s)\n", threads, t_parallel,
              reps / t_parallel);

  const bool same = summary_bytes(serial) == summary_bytes(parallel);
  std::printf("speedup %.2fx, summaries %s\n", t_serial / t_parallel,
              same ? "identical" : "DIFFER");
  return same ? 0 : 1;
}
