#include <doctest.h>

#include "calib/linalg.hpp"

using calib::Matrix;
using calib::Vector;

namespace {

double max_abs(const Matrix& a) { return a.cwiseAbs().maxCoeff(); }

// The four Penrose conditions pin the pseudoinverse uniquely.
void check_penrose(const Matrix& a, const Matrix& p, double tol = 1e-10) {
  CHECK(max_abs(a * p * a - a) <= tol);
  CHECK(max_abs(p * a * p - p) <= tol);
  CHECK(max_abs((a * p).transpose() - a * p) <= tol);
  CHECK(max_abs((p * a).transpose() - p * a) <= tol);
}

}  // namespace

TEST_CASE("pseudoinverse of an invertible matrix is the inverse") {
  Matrix a(2, 2);
  a << 4.0, 1.0, 2.0, 3.0;
  const auto r = calib::pinv_with_rank(a);
  CHECK(r.rank == 2);
  CHECK(max_abs(r.pinv - a.inverse()) <= 1e-12);
  check_penrose(a, r.pinv, 1e-12);
}

TEST_CASE("rank-one pseudoinverse matches the closed form") {
  // a = u v' with u = (1,2)', v = (1,2)': pinv = a' / (|u|^2 |v|^2) = a' / 25.
  Matrix a(2, 2);
  a << 1.0, 2.0, 2.0, 4.0;
  const auto r = calib::pinv_with_rank(a);
  CHECK(r.rank == 1);
  Matrix expected(2, 2);
  expected << 0.04, 0.08, 0.08, 0.16;
  CHECK(max_abs(r.pinv - expected) <= 1e-12);
  check_penrose(a, r.pinv, 1e-12);
}

TEST_CASE("pseudoinverse of a diagonal matrix inverts the nonzero entries") {
  Matrix a = Matrix::Zero(3, 3);
  a(0, 0) = 2.0;
  a(2, 2) = 0.5;
  const Matrix p = calib::pseudo_inverse(a);
  CHECK(p(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p(1, 1) == 0.0);
  CHECK(p(2, 2) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("penrose conditions hold on random rectangular matrices") {
  // Simple LCG noise keeps this file self-contained.
  std::uint64_t state = 99991;
  auto u = [&state]() {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    return (state >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  };
  for (int rows : {3, 5, 8}) {
    for (int cols : {2, 5, 7}) {
      Matrix a(rows, cols);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) a(i, j) = u();
      const auto r = calib::pinv_with_rank(a);
      CHECK(r.rank == std::min(rows, cols));  // random matrices are full rank
      check_penrose(a, r.pinv);
    }
  }
}

TEST_CASE("numerical rank ignores singular values below the tolerance") {
  Matrix a = Matrix::Zero(3, 3);
  a(0, 0) = 1.0;
  a(1, 1) = 1e-3;
  a(2, 2) = 1e-17;
  CHECK(calib::numerical_rank(a) == 2);         // default: ~7e-16 relative
  CHECK(calib::numerical_rank(a, 1e-2) == 1);   // coarser cut
  CHECK(calib::numerical_rank(a, 1e-18) == 3);  // finer cut keeps everything
}

TEST_CASE("rank is invariant under column duplication") {
  Matrix a(4, 2);
  a << 1.0, 2.0, 3.0, 4.0, 5.0, 6.5, 7.0, 8.0;
  Matrix b(4, 4);
  b << a, a;
  CHECK(calib::numerical_rank(a) == 2);
  CHECK(calib::numerical_rank(b) == 2);
}

TEST_CASE("empty and non-finite inputs are rejected") {
  CHECK_THROWS_AS(calib::pseudo_inverse(Matrix(0, 0)), calib::InvalidInput);
  Matrix bad(2, 2);
  bad << 1.0, 2.0, std::numeric_limits<double>::quiet_NaN(), 4.0;
  CHECK_THROWS_AS(calib::pseudo_inverse(bad), calib::InvalidInput);
  Matrix ok = Matrix::Identity(2, 2);
  CHECK_THROWS_AS(calib::pinv_with_rank(ok, -1.0), calib::InvalidInput);
}
