#include "calib/design.hpp"

#include "calib/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace calib {

DesignKind parse_design(const std::string& name) {
  if (name == "simple") return DesignKind::Simple;
  if (name == "stratified-block") return DesignKind::StratifiedBlock;
  if (name == "minimization") return DesignKind::Minimization;
  throw InvalidInput("unknown design: " + name);
}

std::string design_name(DesignKind kind) {
  switch (kind) {
    case DesignKind::Simple: return "simple";
    case DesignKind::StratifiedBlock: return "stratified-block";
    case DesignKind::Minimization: return "minimization";
  }
  return "?";
}

static void check_common(const DesignSpec& spec, const std::vector<int>& strata) {
  if (strata.empty()) throw InvalidInput("assign: no units");
  if (!(spec.target_share > 0.0 && spec.target_share < 1.0))
    throw InvalidInput("assign: target_share must lie strictly in (0, 1)");
  int k_max = 0;
  for (int b : strata) {
    if (b < 1) throw InvalidInput("assign: stratum labels must be 1..K");
    k_max = std::max(k_max, b);
  }
  (void)k_max;
}

static std::vector<int> assign_simple(const DesignSpec& spec,
                                      const std::vector<int>& strata) {
  Rng rng(spec.seed);
  std::vector<int> arm(strata.size());
  for (std::size_t i = 0; i < strata.size(); ++i)
    arm[i] = rng.bernoulli(spec.target_share) ? 1 : 0;
  return arm;
}

static std::vector<int> assign_blocks(const DesignSpec& spec,
                                      const std::vector<int>& strata) {
  const int b = spec.block_size;
  if (b < 1) throw InvalidInput("assign: block_size must be >= 1");
  const double treated_per_block = b * spec.target_share;
  const int t = static_cast<int>(std::lround(treated_per_block));
  if (std::fabs(treated_per_block - t) > 1e-9 || t < 1 || t > b - 1)
    throw InvalidInput("assign: block_size * target_share must be an integer in [1, block_size-1]");

  const int n = static_cast<int>(strata.size());
  int num_strata = 0;
  for (int s : strata) num_strata = std::max(num_strata, s);

  // Units of each stratum in arrival order.
  std::vector<std::vector<int>> members(num_strata + 1);
  for (int i = 0; i < n; ++i) members[strata[i]].push_back(i);

  Rng rng(spec.seed);
  std::vector<int> arm(n, 0);
  std::vector<int> block(b);
  for (int k = 1; k <= num_strata; ++k) {
    const auto& rows = members[k];
    int filled = 0;
    while (filled < static_cast<int>(rows.size())) {
      // One full block: t ones then zeros, shuffled; a trailing partial block
      // uses only the prefix.
      for (int j = 0; j < b; ++j) block[j] = j < t ? 1 : 0;
      rng.shuffle(block);
      for (int j = 0; j < b && filled < static_cast<int>(rows.size()); ++j, ++filled)
        arm[rows[filled]] = block[j];
    }
  }
  return arm;
}

static std::vector<int> assign_minimization(const DesignSpec& spec,
                                            const std::vector<int>& strata,
                                            const std::vector<std::vector<int>>& factors_in) {
  if (!(spec.biased_coin >= 0.5 && spec.biased_coin <= 1.0))
    throw InvalidInput("assign: biased_coin must lie in [0.5, 1]");
  const int n = static_cast<int>(strata.size());

  std::vector<std::vector<int>> factors = factors_in;
  if (factors.empty()) factors.push_back(strata);
  for (const auto& col : factors)
    if (static_cast<int>(col.size()) != n)
      throw InvalidInput("assign: factor column length differs from unit count");
  const int f_count = static_cast<int>(factors.size());

  std::vector<double> w = spec.factor_weights;
  if (w.empty()) w.assign(f_count, 1.0);
  if (static_cast<int>(w.size()) != f_count)
    throw InvalidInput("assign: factor_weights length differs from factor count");

  // Margin counts per factor: level -> (# arm 1, # arm 0).
  std::vector<std::map<int, std::pair<int, int>>> margin(f_count);

  Rng rng(spec.seed);
  std::vector<int> arm(n, 0);
  for (int i = 0; i < n; ++i) {
    double g1 = 0.0, g0 = 0.0;  // weighted imbalance if unit joins arm 1 / 0
    for (int f = 0; f < f_count; ++f) {
      const auto it = margin[f].find(factors[f][i]);
      const int c1 = it == margin[f].end() ? 0 : it->second.first;
      const int c0 = it == margin[f].end() ? 0 : it->second.second;
      g1 += w[f] * std::abs((c1 + 1) - c0);
      g0 += w[f] * std::abs(c1 - (c0 + 1));
    }
    double p1;  // probability of assigning arm 1
    if (g1 < g0)
      p1 = spec.biased_coin;
    else if (g0 < g1)
      p1 = 1.0 - spec.biased_coin;
    else
      p1 = 0.5;
    arm[i] = rng.bernoulli(p1) ? 1 : 0;
    for (int f = 0; f < f_count; ++f) {
      auto& cell = margin[f][factors[f][i]];
      if (arm[i] == 1)
        ++cell.first;
      else
        ++cell.second;
    }
  }
  return arm;
}

std::vector<int> assign(const DesignSpec& spec, const std::vector<int>& strata,
                        const std::vector<std::vector<int>>& factors) {
  check_common(spec, strata);
  switch (spec.kind) {
    case DesignKind::Simple: return assign_simple(spec, strata);
    case DesignKind::StratifiedBlock: return assign_blocks(spec, strata);
    case DesignKind::Minimization: return assign_minimization(spec, strata, factors);
  }
  throw InvalidInput("assign: unknown design kind");
}

}  // namespace calib
