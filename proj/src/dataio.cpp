#include "calib/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>

namespace calib {

namespace {

// Splits one CSV record; supports double-quoted fields with "" escapes.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return s.substr(a, b - a);
}

double parse_number(const std::string& field, std::size_t row, const std::string& col) {
  const std::string s = trim(field);
  if (s.empty()) throw ParseError(row, col, "row " + std::to_string(row) +
                                                ", column '" + col + "': empty field");
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v))
    throw ParseError(row, col, "row " + std::to_string(row) + ", column '" + col +
                                   "': cannot parse '" + s + "' as a number");
  return v;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(0, "", "cannot open " + path);
  Table tb;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv(line);
    for (auto& f : fields) f = trim(f);
    if (first) {
      tb.header = fields;
      first = false;
    } else {
      if (fields.size() != tb.header.size())
        throw ParseError(tb.rows.size() + 1, "",
                         "row " + std::to_string(tb.rows.size() + 1) + ": expected " +
                             std::to_string(tb.header.size()) + " fields, found " +
                             std::to_string(fields.size()));
      tb.rows.push_back(std::move(fields));
    }
  }
  if (first) throw ParseError(0, "", path + ": missing header row");
  return tb;
}

int column_of(const Table& tb, const std::string& name) {
  for (std::size_t j = 0; j < tb.header.size(); ++j)
    if (tb.header[j] == name) return static_cast<int>(j);
  throw ParseError(0, name, "column '" + name + "' not found in header");
}

}  // namespace

Trial load_trial(const std::string& path, const CsvSchema& schema) {
  const Table tb = read_table(path);
  if (tb.rows.empty()) throw ParseError(0, "", path + ": no data rows");

  const int yc = column_of(tb, schema.outcome);
  const int ac = column_of(tb, schema.arm);
  const int sc = column_of(tb, schema.stratum);

  std::vector<int> xcols;
  std::vector<std::string> xnames;
  if (schema.covariates.empty()) {
    for (std::size_t j = 0; j < tb.header.size(); ++j) {
      if (static_cast<int>(j) == yc || static_cast<int>(j) == ac ||
          static_cast<int>(j) == sc)
        continue;
      xcols.push_back(static_cast<int>(j));
      xnames.push_back(tb.header[j]);
    }
  } else {
    for (const auto& name : schema.covariates) {
      xcols.push_back(column_of(tb, name));
      xnames.push_back(name);
    }
  }

  const int n = static_cast<int>(tb.rows.size());
  Trial t;
  t.y.resize(n);
  t.arm.resize(n);
  t.stratum.resize(n);
  t.x.resize(n, static_cast<Eigen::Index>(xcols.size()));
  t.covariate_names = xnames;

  std::map<std::string, int> codes;
  for (int i = 0; i < n; ++i) {
    const auto& row = tb.rows[i];
    t.y(i) = parse_number(row[yc], i + 1, schema.outcome);
    const double a = parse_number(row[ac], i + 1, schema.arm);
    if (a != 0.0 && a != 1.0)
      throw ParseError(i + 1, schema.arm,
                       "row " + std::to_string(i + 1) + ", column '" + schema.arm +
                           "': arm must be 0 or 1, found '" + row[ac] + "'");
    t.arm[i] = static_cast<int>(a);
    const std::string token = row[sc];
    if (token.empty())
      throw ParseError(i + 1, schema.stratum,
                       "row " + std::to_string(i + 1) + ": empty stratum token");
    auto it = codes.find(token);
    if (it == codes.end()) {
      it = codes.emplace(token, static_cast<int>(codes.size()) + 1).first;
      t.stratum_names.push_back(token);
    }
    t.stratum[i] = it->second;
    for (std::size_t j = 0; j < xcols.size(); ++j)
      t.x(i, j) = parse_number(row[xcols[j]], i + 1, xnames[j]);
  }
  t.validate();
  return t;
}

void write_trial(const Trial& t, const std::string& path, const CsvSchema& schema) {
  t.validate();
  std::ofstream out(path);
  if (!out) throw ParseError(0, "", "cannot open " + path + " for writing");
  out << schema.outcome << "," << schema.arm << "," << schema.stratum;
  for (int j = 0; j < t.num_covariates(); ++j)
    out << ","
        << (t.covariate_names.empty() ? "x" + std::to_string(j + 1)
                                      : t.covariate_names[j]);
  out << "\n";
  char buf[64];
  for (int i = 0; i < t.n(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", t.y(i));
    out << buf << "," << t.arm[i] << ",";
    out << (t.stratum_names.empty() ? std::to_string(t.stratum[i])
                                    : t.stratum_names[t.stratum[i] - 1]);
    for (int j = 0; j < t.num_covariates(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", t.x(i, j));
      out << "," << buf;
    }
    out << "\n";
  }
}

double lower_quantile(std::vector<double> v, double p) {
  if (v.empty()) throw InvalidInput("lower_quantile: empty vector");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("lower_quantile: p outside [0, 1]");
  std::sort(v.begin(), v.end());
  const double h = p * (v.size() - 1);
  return v[static_cast<std::size_t>(std::floor(h))];
}

std::vector<double> winsorize(std::vector<double> v, double upper_pct) {
  if (v.empty()) throw InvalidInput("winsorize: empty vector");
  if (!(upper_pct > 0.0 && upper_pct <= 1.0))
    throw InvalidInput("winsorize: quantile outside (0, 1]");
  for (double x : v)
    if (!std::isfinite(x)) throw InvalidInput("winsorize: non-finite value");
  if (upper_pct == 1.0) return v;
  const double cap = lower_quantile(v, upper_pct);
  for (double& x : v) x = std::min(x, cap);
  return v;
}

PruneResult prune_strata(const Trial& t, int min_size) {
  t.validate();
  if (min_size < 1) throw InvalidInput("prune_strata: min_size must be >= 1");
  const int num_strata = t.num_strata() > 0
                             ? t.num_strata()
                             : *std::max_element(t.stratum.begin(), t.stratum.end());
  std::vector<int> count(num_strata + 1, 0);
  for (int b : t.stratum) ++count[b];

  std::vector<int> relabel(num_strata + 1, 0);
  int next = 0;
  for (int k = 1; k <= num_strata; ++k)
    if (count[k] >= min_size) relabel[k] = ++next;
  if (next == 0) throw InvalidInput("prune_strata: no stratum reaches min_size");

  std::vector<int> keep_rows;
  for (int i = 0; i < t.n(); ++i)
    if (relabel[t.stratum[i]] > 0) keep_rows.push_back(i);

  PruneResult out;
  out.trial = subset_trial(t, keep_rows);
  out.removed_units = t.n() - static_cast<int>(keep_rows.size());
  out.removed_strata = num_strata - next;
  for (auto& b : out.trial.stratum) b = relabel[b];
  out.trial.stratum_names.clear();
  for (int k = 1; k <= num_strata; ++k)
    if (relabel[k] > 0)
      out.trial.stratum_names.push_back(
          t.stratum_names.empty() ? std::to_string(k) : t.stratum_names[k - 1]);
  return out;
}

XyData load_xy(const std::string& path, const std::string& outcome,
               const std::vector<std::string>& features) {
  const Table tb = read_table(path);
  if (tb.rows.empty()) throw ParseError(0, "", path + ": no data rows");
  const int yc = column_of(tb, outcome);

  std::vector<int> xcols;
  XyData d;
  if (features.empty()) {
    for (std::size_t j = 0; j < tb.header.size(); ++j) {
      if (static_cast<int>(j) == yc) continue;
      xcols.push_back(static_cast<int>(j));
      d.feature_names.push_back(tb.header[j]);
    }
  } else {
    for (const auto& name : features) {
      xcols.push_back(column_of(tb, name));
      d.feature_names.push_back(name);
    }
  }
  const int n = static_cast<int>(tb.rows.size());
  d.x.resize(n, static_cast<Eigen::Index>(xcols.size()));
  d.y.resize(n);
  for (int i = 0; i < n; ++i) {
    d.y(i) = parse_number(tb.rows[i][yc], i + 1, outcome);
    for (std::size_t j = 0; j < xcols.size(); ++j)
      d.x(i, j) = parse_number(tb.rows[i][xcols[j]], i + 1, d.feature_names[j]);
  }
  return d;
}

}  // namespace calib
