#pragma once

#include "calib/common.hpp"

namespace calib {

// Default relative tolerance for rank decisions: max(rows, cols) * machine
// epsilon, applied to the largest singular value.
double default_rank_tol(const Matrix& a);

struct PinvResult {
  Matrix pinv;
  int rank;
};

// Moore-Penrose pseudoinverse and numerical rank from one full SVD, so the
// two are always consistent: singular values sigma_i <= rel_tol * sigma_max
// are treated as exact zeros. rel_tol = 0 selects the default tolerance.
PinvResult pinv_with_rank(const Matrix& a, double rel_tol = 0.0);

Matrix pseudo_inverse(const Matrix& a, double rel_tol = 0.0);
int numerical_rank(const Matrix& a, double rel_tol = 0.0);

}  // namespace calib
