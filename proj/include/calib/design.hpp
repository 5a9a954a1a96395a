#pragma once

#include "calib/common.hpp"

#include <cstdint>
#include <vector>

namespace calib {

enum class DesignKind { Simple, StratifiedBlock, Minimization };

struct DesignSpec {
  DesignKind kind = DesignKind::StratifiedBlock;
  double target_share = 0.5;  // treated share pi, constant across strata
  int block_size = 6;         // stratified-block only
  double biased_coin = 0.75;  // minimization only
  std::vector<double> factor_weights;  // minimization; empty = equal weights
  std::uint64_t seed = 0;
};

DesignKind parse_design(const std::string& name);
std::string design_name(DesignKind kind);

// Assigns each unit to arm 1 (treated) or 0 in arrival order.
//
//   simple            iid Bernoulli(pi), strata ignored.
//   stratified-block  within each stratum, permuted blocks of block_size with
//                     exactly block_size*pi treated; a final partial block is
//                     the prefix of one more shuffled full block.
//   minimization      sequential biased-coin balancing of factor margins; the
//                     arm whose hypothetical assignment gives the smaller
//                     weighted sum of margin imbalances is drawn with
//                     probability biased_coin (ties: 1/2). factors holds one
//                     column of level codes per balancing factor; when empty
//                     the stratum labels are the single factor.
std::vector<int> assign(const DesignSpec& spec, const std::vector<int>& strata,
                        const std::vector<std::vector<int>>& factors = {});

}  // namespace calib
