#pragma once

#include "calib/trial.hpp"

#include <string>
#include <vector>

namespace calib {

struct ParseError : Error {
  std::size_t row;  // 1-based data row (0: header/file-level)
  std::string column;
  ParseError(std::size_t r, std::string col, const std::string& what)
      : Error(what), row(r), column(std::move(col)) {}
};

// Column names in a trial CSV file (comma-separated, one header row, UTF-8).
// Empty covariates means "every column not otherwise named". Arm values must
// be 0 or 1; stratum tokens are arbitrary and are coded 1..K by first
// appearance (the original tokens are kept for writing).
struct CsvSchema {
  std::string outcome = "y";
  std::string arm = "arm";
  std::string stratum = "stratum";
  std::vector<std::string> covariates;
};

Trial load_trial(const std::string& path, const CsvSchema& schema = {});

// Writes outcome/arm/stratum plus covariates at full precision (%.17g), so a
// load/write cycle reproduces every value bit-for-bit.
void write_trial(const Trial& t, const std::string& path,
                 const CsvSchema& schema = {});

// Lower order statistic sorted[floor((n-1) p)]; this choice is a fixed point
// under capping, which makes winsorize idempotent.
double lower_quantile(std::vector<double> v, double p);

// Caps values above the upper_pct quantile at that quantile. upper_pct = 1
// is the identity.
std::vector<double> winsorize(std::vector<double> v, double upper_pct);

struct PruneResult {
  Trial trial;
  int removed_units = 0;
  int removed_strata = 0;
};

// Drops every stratum with fewer than min_size units and relabels the
// survivors 1..K' (original order kept). Removing everything is an error.
PruneResult prune_strata(const Trial& t, int min_size);

// Plain numeric table for external calibration sources: one outcome column,
// the rest (or the named subset) as features.
struct XyData {
  Matrix x;
  Vector y;
  std::vector<std::string> feature_names;
};

XyData load_xy(const std::string& path, const std::string& outcome,
               const std::vector<std::string>& features = {});

}  // namespace calib
