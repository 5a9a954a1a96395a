#include "calib/linalg.hpp"

#include <Eigen/SVD>

#include <limits>

namespace calib {

double default_rank_tol(const Matrix& a) {
  return static_cast<double>(std::max(a.rows(), a.cols())) *
         std::numeric_limits<double>::epsilon();
}

PinvResult pinv_with_rank(const Matrix& a, double rel_tol) {
  if (a.rows() == 0 || a.cols() == 0)
    throw InvalidInput("pinv_with_rank: empty matrix");
  if (!all_finite(a))
    throw InvalidInput("pinv_with_rank: non-finite entries");
  if (rel_tol < 0.0)
    throw InvalidInput("pinv_with_rank: negative tolerance");
  if (rel_tol == 0.0) rel_tol = default_rank_tol(a);

  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  const double cutoff = rel_tol * (sigma.size() > 0 ? sigma(0) : 0.0);

  int rank = 0;
  Vector inv_sigma = Vector::Zero(sigma.size());
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (sigma(i) > cutoff && sigma(i) > 0.0) {
      inv_sigma(i) = 1.0 / sigma(i);
      ++rank;
    }
  }
  PinvResult out;
  out.pinv = svd.matrixV() * inv_sigma.asDiagonal() * svd.matrixU().transpose();
  out.rank = rank;
  return out;
}

Matrix pseudo_inverse(const Matrix& a, double rel_tol) {
  return pinv_with_rank(a, rel_tol).pinv;
}

int numerical_rank(const Matrix& a, double rel_tol) {
  if (a.rows() == 0 || a.cols() == 0)
    throw InvalidInput("numerical_rank: empty matrix");
  if (!all_finite(a))
    throw InvalidInput("numerical_rank: non-finite entries");
  if (rel_tol < 0.0)
    throw InvalidInput("numerical_rank: negative tolerance");
  if (rel_tol == 0.0) rel_tol = default_rank_tol(a);

  Eigen::JacobiSVD<Matrix> svd(a);
  const Vector& sigma = svd.singularValues();
  const double cutoff = rel_tol * (sigma.size() > 0 ? sigma(0) : 0.0);
  int rank = 0;
  for (Eigen::Index i = 0; i < sigma.size(); ++i)
    if (sigma(i) > cutoff && sigma(i) > 0.0) ++rank;
  return rank;
}

}  // namespace calib
