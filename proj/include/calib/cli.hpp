#pragma once

#include "calib/dataio.hpp"
#include "calib/estimator.hpp"

#include <string>
#include <vector>

namespace calib::cli {

// One term of a proxy expression. Terms are joined with '+' (commas also work
// between terms; commas inside a raw column list belong to the list):
//   raw:x1,x2           plain covariate columns
//   pow:(x+1)^0.481     transformed column, also written pow:x^0.481+1
//   within:ols          (stratum, arm) fits of a learner, own-stratum scores
//   cross:tree          every stratum's fits evaluated everywhere
//   external            learner fit on the --external file
// "ols-within" style aliases are accepted for within:/cross: terms.
struct ProxyTerm {
  enum class Kind { Raw, Pow, Within, Cross, External };
  Kind kind = Kind::Raw;
  std::vector<std::string> columns;        // raw
  std::string column;                      // pow
  double shift = 0.0, exponent = 1.0;      // pow
  LearnerKind learner = LearnerKind::Ols;  // within / cross / external
  bool learner_given = false;              // external may omit it
};

std::vector<ProxyTerm> parse_proxy_expr(const std::string& expr);

// 0-based covariate index for a name: header match first, else a 1-based
// integer position.
int resolve_column(const Trial& t, const std::string& name);

// Builds the stacked proxy for `eval`, training learner terms on `train`.
// external may be null when no external term appears.
ProxyMatrix build_proxy(const std::vector<ProxyTerm>& terms, const Trial& train,
                        const Trial& eval, const LearnerSpec& base,
                        const XyData* external);

// Entry point used by main(); returns the process exit code.
int run(int argc, const char* const* argv);

}  // namespace calib::cli
