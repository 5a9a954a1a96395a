#include "calib/cli.hpp"

#include "calib/parallel.hpp"
#include "calib/rng.hpp"
#include "calib/sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

namespace calib::cli {

namespace {

double parse_double(const std::string& s, const std::string& what) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw InvalidInput("proxy: cannot parse number '" + s + "' in " + what);
  return v;
}

bool is_term_start(const std::string& frag) {
  for (const char* p : {"raw:", "pow:", "within:", "cross:", "external:"})
    if (frag.rfind(p, 0) == 0) return true;
  if (frag == "external") return true;
  const auto dash = frag.rfind('-');
  if (dash != std::string::npos) {
    const std::string tail = frag.substr(dash + 1);
    if (tail == "within" || tail == "cross") return true;
  }
  return false;
}

// Splits name(+|-)shift. A sign directly after a numeric exponent marker, as
// in 1e-3, is part of the number, not a separator.
void split_shift(const std::string& s, std::string& head, double& shift,
                 const std::string& what) {
  shift = 0.0;
  head = s;
  for (std::size_t i = s.size(); i-- > 1;) {
    if (s[i] != '+' && s[i] != '-') continue;
    if ((s[i - 1] == 'e' || s[i - 1] == 'E') && i >= 2 &&
        (std::isdigit(static_cast<unsigned char>(s[i - 2])) || s[i - 2] == '.'))
      continue;
    head = s.substr(0, i);
    shift = parse_double(s.substr(i), what);
    return;
  }
}

ProxyTerm parse_pow(const std::string& spec) {
  ProxyTerm t;
  t.kind = ProxyTerm::Kind::Pow;
  if (spec.empty()) throw InvalidInput("proxy: empty pow term");
  if (spec[0] == '(') {
    const auto close = spec.rfind(")^");
    if (close == std::string::npos)
      throw InvalidInput("proxy: malformed pow term 'pow:" + spec + "'");
    split_shift(spec.substr(1, close - 1), t.column, t.shift, "pow shift");
    t.exponent = parse_double(spec.substr(close + 2), "pow exponent");
  } else {
    const auto caret = spec.find('^');
    if (caret == std::string::npos || caret == 0)
      throw InvalidInput("proxy: malformed pow term 'pow:" + spec + "'");
    t.column = spec.substr(0, caret);
    std::string exp_part;
    split_shift(spec.substr(caret + 1), exp_part, t.shift, "pow shift");
    t.exponent = parse_double(exp_part, "pow exponent");
  }
  if (t.column.empty()) throw InvalidInput("proxy: pow term names no column");
  return t;
}

ProxyTerm parse_term(const std::string& frag) {
  ProxyTerm t;
  if (frag.rfind("raw:", 0) == 0) {
    t.kind = ProxyTerm::Kind::Raw;
    std::stringstream ss(frag.substr(4));
    std::string piece;
    while (std::getline(ss, piece, ','))
      if (!piece.empty()) t.columns.push_back(piece);
    if (t.columns.empty()) throw InvalidInput("proxy: raw term names no columns");
    return t;
  }
  if (frag.rfind("pow:", 0) == 0) return parse_pow(frag.substr(4));
  if (frag.rfind("within:", 0) == 0) {
    t.kind = ProxyTerm::Kind::Within;
    t.learner = parse_learner(frag.substr(7));
    t.learner_given = true;
    return t;
  }
  if (frag.rfind("cross:", 0) == 0) {
    t.kind = ProxyTerm::Kind::Cross;
    t.learner = parse_learner(frag.substr(6));
    t.learner_given = true;
    return t;
  }
  if (frag == "external" || frag.rfind("external:", 0) == 0) {
    t.kind = ProxyTerm::Kind::External;
    if (frag.size() > 9) {
      t.learner = parse_learner(frag.substr(9));
      t.learner_given = true;
    }
    return t;
  }
  const auto dash = frag.rfind('-');
  if (dash != std::string::npos) {
    const std::string tail = frag.substr(dash + 1);
    if (tail == "within" || tail == "cross") {
      t.kind = tail == "within" ? ProxyTerm::Kind::Within : ProxyTerm::Kind::Cross;
      t.learner = parse_learner(frag.substr(0, dash));
      t.learner_given = true;
      return t;
    }
  }
  throw InvalidInput("proxy: cannot parse term '" + frag + "'");
}

}  // namespace

std::vector<ProxyTerm> parse_proxy_expr(const std::string& expr) {
  std::string s;
  for (char c : expr)
    if (!std::isspace(static_cast<unsigned char>(c))) s += c;
  if (s.empty()) throw InvalidInput("proxy: empty expression");

  // Split on '+' and ','; fragments that do not begin a term belong to the
  // previous fragment (raw column lists, pow shifts), so glue them back with
  // their original separator.
  std::vector<std::string> frags;
  std::string cur;
  for (char c : s) {
    if (c == '+' || c == ',') {
      frags.push_back(cur);
      frags.push_back(std::string(1, c));
      cur.clear();
    } else {
      cur += c;
    }
  }
  frags.push_back(cur);

  std::vector<std::string> terms;
  for (std::size_t i = 0; i < frags.size(); i += 2) {
    const std::string& frag = frags[i];
    const char sep = i > 0 ? frags[i - 1][0] : '\0';
    if (terms.empty()) {
      if (frag.empty() || !is_term_start(frag))
        throw InvalidInput("proxy: expression must start with a term, got '" + frag +
                           "'");
      terms.push_back(frag);
    } else if (!frag.empty() && is_term_start(frag)) {
      terms.push_back(frag);
    } else {
      terms.back() += sep + frag;
    }
  }

  std::vector<ProxyTerm> out;
  for (const auto& t : terms) out.push_back(parse_term(t));
  return out;
}

int resolve_column(const Trial& t, const std::string& name) {
  for (std::size_t j = 0; j < t.covariate_names.size(); ++j)
    if (t.covariate_names[j] == name) return static_cast<int>(j);
  if (!name.empty() &&
      name.find_first_not_of("0123456789") == std::string::npos) {
    const int idx = std::atoi(name.c_str()) - 1;
    if (idx >= 0 && idx < t.num_covariates()) return idx;
  }
  throw InvalidInput("unknown covariate '" + name + "'");
}

ProxyMatrix build_proxy(const std::vector<ProxyTerm>& terms, const Trial& train,
                        const Trial& eval, const LearnerSpec& base,
                        const XyData* external) {
  if (terms.empty()) throw InvalidInput("proxy: no terms");
  std::vector<ProxyMatrix> parts;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const ProxyTerm& term = terms[i];
    LearnerSpec spec = base;
    spec.seed = derive_seed(base.seed, 0x7e30 + i);
    switch (term.kind) {
      case ProxyTerm::Kind::Raw: {
        std::vector<int> cols;
        for (const auto& name : term.columns) cols.push_back(resolve_column(eval, name));
        parts.push_back(raw_covariate_proxy(eval, cols));
        break;
      }
      case ProxyTerm::Kind::Pow: {
        const std::vector<int> cols = {resolve_column(eval, term.column)};
        const std::vector<ColumnTransform> tr = {{term.shift, term.exponent}};
        parts.push_back(raw_covariate_proxy(eval, cols, tr));
        break;
      }
      case ProxyTerm::Kind::Within:
        spec.kind = term.learner;
        parts.push_back(within_stratum_proxy_at(train, eval, spec));
        break;
      case ProxyTerm::Kind::Cross:
        spec.kind = term.learner;
        parts.push_back(cross_stratum_proxy_at(train, eval, spec));
        break;
      case ProxyTerm::Kind::External: {
        if (!external)
          throw InvalidInput("proxy uses 'external' but no --external file was given");
        spec.kind = term.learner_given ? term.learner : LearnerKind::Ols;
        std::vector<int> cols;
        for (const auto& name : external->feature_names)
          cols.push_back(resolve_column(eval, name));
        parts.push_back(external_proxy(eval, external->x, external->y, spec, cols));
        break;
      }
    }
  }
  return stack_proxies(parts);
}

namespace {

// ---- shared option bundles ------------------------------------------------

struct LearnerKnobs {
  int knn_k = 5, max_depth = 6, min_leaf = 10, trees = 50;
  double ridge_penalty = 1.0;
  void attach(CLI::App* app) {
    app->add_option("--knn-k", knn_k, "neighbours for knn fits");
    app->add_option("--max-depth", max_depth, "tree depth limit");
    app->add_option("--min-leaf", min_leaf, "minimum units per tree leaf");
    app->add_option("--trees", trees, "trees in bagged ensembles");
    app->add_option("--ridge-penalty", ridge_penalty, "ridge penalty");
  }
  LearnerSpec base() const {
    LearnerSpec s;
    s.k = knn_k;
    s.max_depth = max_depth;
    s.min_leaf = min_leaf;
    s.tree_count = trees;
    s.ridge_penalty = ridge_penalty;
    return s;
  }
};

LearnerKind aipw_learner(const std::vector<ProxyTerm>& terms) {
  for (const auto& t : terms)
    if (t.kind == ProxyTerm::Kind::Within || t.kind == ProxyTerm::Kind::Cross)
      return t.learner;
  return LearnerKind::Ols;
}

void write_report_csv_header(std::ostream& os) {
  os << "method,discrepancy,tau,se,lo,hi,level,n,strata,proxy_dim,"
        "var_h,var_y,var_explained,residual,iterations,converged\n";
}

void write_report_csv_row(std::ostream& os, const AteReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%s,%s,%.12g,%.12g,%.12g,%.12g,%g,%d,%d,%d,%.12g,%.12g,%.12g,"
                "%.6g,%d,%d\n",
                r.method.c_str(), r.discrepancy.c_str(), r.tau_hat, r.se, r.ci_lo,
                r.ci_hi, r.level, r.n, r.num_strata, r.proxy_dim, r.var_h, r.var_y,
                r.var_explained, r.diag.residual, r.diag.iterations,
                r.diag.converged ? 1 : 0);
  os << buf;
}

void print_report(const AteReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%-8s %12.4f %10.4f   [%10.4f, %10.4f]",
                r.method.c_str(), r.tau_hat, r.se, r.ci_lo, r.ci_hi);
  std::cout << buf << "\n";
  for (const auto& w : r.diag.warnings) std::cout << "  warning: " << w << "\n";
}

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
  int model = 0, n = 1000, p = 30, reps = 300, block = 6, folds = 2, threads = 0;
  double pi = 0.5, coin = 0.75, level = 0.95;
  std::string design = "stratified-block";
  std::string proxy = "within:ols";
  std::string discrepancy = "quadratic";
  std::string out;
  std::uint64_t seed = 0;
  bool freeze_interactions = false, cross_fit = false;
  LearnerKnobs knobs;
};

int run_simulate(const SimulateArgs& a) {
  if (a.model == 0) throw InvalidInput("simulate: --model is required (1..4)");
  ModelSpec spec;
  spec.model_id = a.model;
  spec.n = a.n;
  spec.p = a.p;
  spec.seed = a.seed;
  spec.freeze_interactions = a.freeze_interactions;
  spec.design.kind = parse_design(a.design);
  spec.design.target_share = a.pi;
  spec.design.block_size = a.block;
  spec.design.biased_coin = a.coin;

  const auto terms = parse_proxy_expr(a.proxy);
  for (const auto& t : terms)
    if (t.kind == ProxyTerm::Kind::External)
      throw InvalidInput("simulate does not support 'external' proxy terms");
  const Discrepancy disc = parse_discrepancy(a.discrepancy);
  const double level = a.level;
  const std::uint64_t seed = a.seed;
  const LearnerSpec knobs = a.knobs.base();
  const int folds = a.folds;
  const bool cross_fit = a.cross_fit;

  std::vector<EstimatorDef> ests;
  ests.push_back({"sdim", [level](const Trial& t) { return sdim_ate(t, level); }});
  LearnerSpec aipw_spec = knobs;
  aipw_spec.kind = aipw_learner(terms);
  ests.push_back({"aipw", [aipw_spec, level, seed](const Trial& t) {
                    LearnerSpec s = aipw_spec;
                    s.seed = derive_seed(seed, trial_fingerprint(t), 0xA1);
                    return aipw_ate(t, s, level);
                  }});
  if (cross_fit) {
    ests.push_back({"cal-cf", [terms, knobs, disc, level, seed, folds](const Trial& t) {
                      LearnerSpec base = knobs;
                      base.seed = derive_seed(seed, trial_fingerprint(t), 0xCA);
                      const ProxyBuilder builder = [&terms, &base](const Trial& train,
                                                                   const Trial& eval) {
                        return build_proxy(terms, train, eval, base, nullptr);
                      };
                      return cross_fit_ate(t, builder, folds,
                                           derive_seed(seed, trial_fingerprint(t), 0xCF),
                                           disc, level);
                    }});
  } else {
    ests.push_back({"cal", [terms, knobs, disc, level, seed](const Trial& t) {
                      LearnerSpec base = knobs;
                      base.seed = derive_seed(seed, trial_fingerprint(t), 0xCA);
                      return calibrate_ate(t, build_proxy(terms, t, t, base, nullptr),
                                           disc, level);
                    }});
  }

  const SimSummary summary = run_study(spec, a.reps, ests, a.threads);
  if (!a.out.empty()) {
    std::ofstream os(a.out);
    if (!os) throw InvalidInput("cannot open " + a.out + " for writing");
    write_summary_csv(summary, os);
  }
  std::cout << format_summary_table(summary);
  return 0;
}

// ---- estimate ---------------------------------------------------------------

struct EstimateArgs {
  std::string data, outcome = "y", arm = "arm", stratum = "stratum";
  std::vector<std::string> covariates;
  std::string proxy = "within:ols";
  std::string discrepancy = "quadratic";
  std::string external, external_outcome = "y";
  std::vector<std::string> external_features;
  std::string out;
  double level = 0.95, winsorize_pct = 0.0;
  int prune = 0, folds = 2;
  bool cross_fit = false;
  std::uint64_t seed = 0;
  LearnerKnobs knobs;
};

int run_estimate(const EstimateArgs& a) {
  if (a.data.empty()) throw InvalidInput("estimate: --data is required");
  CsvSchema schema;
  schema.outcome = a.outcome;
  schema.arm = a.arm;
  schema.stratum = a.stratum;
  schema.covariates = a.covariates;
  Trial t = load_trial(a.data, schema);
  std::cout << "loaded " << t.n() << " units, " << t.num_strata() << " strata, "
            << t.num_covariates() << " covariates\n";

  if (a.winsorize_pct > 0.0) {
    std::vector<double> y(t.y.data(), t.y.data() + t.n());
    y = winsorize(y, a.winsorize_pct);
    for (int i = 0; i < t.n(); ++i) t.y(i) = y[i];
    std::cout << "winsorized outcome at quantile " << a.winsorize_pct << "\n";
  }
  if (a.prune > 0) {
    const PruneResult pr = prune_strata(t, a.prune);
    std::cout << "pruned " << pr.removed_strata << " strata / " << pr.removed_units
              << " units below size " << a.prune << "; " << pr.trial.n()
              << " units in " << pr.trial.num_strata() << " strata remain\n";
    t = pr.trial;
  }

  const auto terms = parse_proxy_expr(a.proxy);
  std::shared_ptr<XyData> ext;
  for (const auto& term : terms) {
    if (term.kind == ProxyTerm::Kind::External) {
      if (a.external.empty())
        throw InvalidInput("proxy uses 'external' but no --external file was given");
      ext = std::make_shared<XyData>(
          load_xy(a.external, a.external_outcome, a.external_features));
      std::cout << "external source: " << ext->x.rows() << " rows, "
                << ext->x.cols() << " features\n";
      break;
    }
  }

  const Discrepancy disc = parse_discrepancy(a.discrepancy);
  LearnerSpec base = a.knobs.base();
  base.seed = derive_seed(a.seed, trial_fingerprint(t), 0xCA);

  const AteReport r_sdim = sdim_ate(t, a.level);
  AteReport r_cal;
  if (a.cross_fit) {
    const ProxyBuilder builder = [&terms, &base, &ext](const Trial& train,
                                                       const Trial& eval) {
      return build_proxy(terms, train, eval, base, ext.get());
    };
    r_cal = cross_fit_ate(t, builder, a.folds,
                          derive_seed(a.seed, trial_fingerprint(t), 0xCF), disc,
                          a.level);
  } else {
    r_cal = calibrate_ate(t, build_proxy(terms, t, t, base, ext.get()), disc, a.level);
  }

  std::cout << "method          tau         se    " << (a.level * 100)
            << "% interval\n";
  print_report(r_sdim);
  print_report(r_cal);

  if (!a.out.empty()) {
    std::ofstream os(a.out);
    if (!os) throw InvalidInput("cannot open " + a.out + " for writing");
    write_report_csv_header(os);
    write_report_csv_row(os, r_sdim);
    write_report_csv_row(os, r_cal);
  }
  return 0;
}

// ---- rho-check ----------------------------------------------------------------

int run_rho_check(double step, double tol, bool as_json) {
  const auto rows = rho_table_check(step, tol);
  bool all_pass = true;
  if (as_json) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : rows) {
      j.push_back({{"discrepancy", r.name},
                   {"d1", r.d1},
                   {"d2", r.d2},
                   {"d3", r.d3},
                   {"expected", {r.expected_d1, r.expected_d2, r.expected_d3}},
                   {"pass", r.pass}});
      all_pass = all_pass && r.pass;
    }
    std::cout << j.dump(2) << "\n";
  } else {
    std::printf("%-16s %12s %12s %12s  %s\n", "discrepancy", "rho'(0)", "rho''(0)",
                "rho'''(0)", "status");
    for (const auto& r : rows) {
      std::printf("%-16s %12.8f %12.8f %12.8f  %s\n", r.name.c_str(), r.d1, r.d2,
                  r.d3, r.pass ? "PASS" : "FAIL");
      all_pass = all_pass && r.pass;
    }
  }
  return all_pass ? 0 : 1;
}

// ---- config files -----------------------------------------------------------

// CLI11 only processes a config option on the top-level app, so the
// subcommands apply theirs by hand: plain `key = value` lines where each key
// names a long option. Runs after parsing and touches only options the
// command line left alone, so explicit flags always win. Duplicate keys keep
// the last value.
void apply_config(CLI::App* cmd, const std::string& path) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw InvalidInput("config: cannot open " + path);

  const auto strip = [](const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
  };

  std::map<std::string, std::string> items;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = strip(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    const auto eq = s.find('=');
    const std::string key = eq == std::string::npos ? "" : strip(s.substr(0, eq));
    if (key.empty())
      throw InvalidInput("config: " + path + " line " + std::to_string(lineno) +
                         " is not key = value");
    std::string value = strip(s.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
        value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    items[key] = value;
  }

  for (const auto& [key, value] : items) {
    CLI::Option* op = cmd->get_option_no_throw("--" + key);
    if (op == nullptr)
      throw InvalidInput("config: unknown key '" + key + "' in " + path);
    if (op->count() > 0) continue;  // the command line wins
    try {
      op->add_result(value);
      op->run_callback();
    } catch (const CLI::Error& e) {
      throw InvalidInput("config: key '" + key + "': " + e.what());
    }
  }
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{
      "calibration-weighted treatment effect estimation for stratified trials"};
  app.require_subcommand(1);

  SimulateArgs sa;
  std::string sim_config;
  CLI::App* sim = app.add_subcommand("simulate", "run a simulation study");
  sim->add_option("--config", sim_config, "key = value option file");
  sim->add_option("--model", sa.model, "generator 1..4 (required)");
  sim->add_option("--n", sa.n, "units per replication");
  sim->add_option("--p", sa.p, "covariate count");
  sim->add_option("--reps", sa.reps, "replications");
  sim->add_option("--design", sa.design, "simple | stratified-block | minimization");
  sim->add_option("--block", sa.block, "block size (stratified-block)");
  sim->add_option("--pi", sa.pi, "treated share");
  sim->add_option("--coin", sa.coin, "biased coin probability (minimization)");
  sim->add_option("--proxy", sa.proxy, "proxy expression");
  sim->add_option("--discrepancy", sa.discrepancy,
                  "quadratic | exp-tilting | emp-likelihood");
  sim->add_option("--seed", sa.seed, "base seed");
  sim->add_option("--threads", sa.threads,
                  "worker threads (0 = CALIB_THREADS or hardware)");
  sim->add_option("--out", sa.out, "summary CSV path");
  sim->add_option("--level", sa.level, "confidence level");
  sim->add_option("--folds", sa.folds, "cross-fitting folds");
  sim->add_flag("--cross-fit", sa.cross_fit, "cross-fit the calibration proxy");
  sim->add_flag("--freeze-interactions", sa.freeze_interactions,
                "one interaction draw for all replications (models 2/4)");
  sa.knobs.attach(sim);

  EstimateArgs ea;
  std::string est_config;
  CLI::App* est = app.add_subcommand("estimate", "estimate from a trial CSV");
  est->add_option("--config", est_config, "key = value option file");
  est->add_option("--data", ea.data, "trial CSV (required)");
  est->add_option("--outcome", ea.outcome, "outcome column");
  est->add_option("--arm", ea.arm, "arm column (0/1)");
  est->add_option("--stratum", ea.stratum, "stratum column");
  est->add_option("--covariates", ea.covariates, "covariate columns (default: all others)")
      ->delimiter(',');
  est->add_option("--proxy", ea.proxy, "proxy expression");
  est->add_option("--discrepancy", ea.discrepancy,
                  "quadratic | exp-tilting | emp-likelihood");
  est->add_option("--external", ea.external, "external source CSV");
  est->add_option("--external-outcome", ea.external_outcome,
                  "outcome column of the external CSV");
  est->add_option("--external-features", ea.external_features,
                  "feature columns of the external CSV (default: all others)")
      ->delimiter(',');
  est->add_option("--level", ea.level, "confidence level");
  est->add_option("--winsorize", ea.winsorize_pct,
                  "cap the outcome at this upper quantile, in (0, 1]");
  est->add_option("--prune", ea.prune, "drop strata smaller than this");
  est->add_option("--folds", ea.folds, "cross-fitting folds");
  est->add_flag("--cross-fit", ea.cross_fit, "cross-fit the calibration proxy");
  est->add_option("--seed", ea.seed, "base seed");
  est->add_option("--out", ea.out, "report CSV path");
  ea.knobs.attach(est);

  double rc_step = 1e-4, rc_tol = 1e-4;
  bool rc_json = false;
  CLI::App* rc = app.add_subcommand("rho-check",
                                    "verify discrepancy derivative triples");
  rc->add_option("--step", rc_step, "finite-difference step");
  rc->add_option("--tol", rc_tol, "pass tolerance");
  rc->add_flag("--json", rc_json, "JSON output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (sim->parsed()) {
      apply_config(sim, sim_config);
      return run_simulate(sa);
    }
    if (est->parsed()) {
      apply_config(est, est_config);
      return run_estimate(ea);
    }
    if (rc->parsed()) return run_rho_check(rc_step, rc_tol, rc_json);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace calib::cli
