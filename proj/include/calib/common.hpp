#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace calib {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad arguments: wrong shapes, non-finite entries, out-of-range settings.
struct InvalidInput : Error {
  using Error::Error;
};

// A stratum that cannot support estimation (empty, or single-arm).
struct DegenerateStratum : Error {
  int stratum;
  DegenerateStratum(int k, const std::string& what) : Error(what), stratum(k) {}
};

inline bool all_finite(const Matrix& a) { return a.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace calib
