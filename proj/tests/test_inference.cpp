#include <doctest.h>

#include "calib/inference.hpp"
#include "calib/rng.hpp"

#include <cmath>

using calib::Matrix;
using calib::Trial;
using calib::VarianceComponents;
using calib::VarianceOptions;
using calib::Vector;

namespace {

// Same twelve-unit table as the trial tests; all moments are hand-checkable.
Trial toy_trial() {
  Trial t;
  t.y.resize(12);
  t.y << 10.5, 8.1, 9.7, 7.9, 12.2, 9.0, 11.8, 8.8, 10.1, 8.5, 11.0, 8.0;
  t.arm = {1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
  t.stratum = {1, 1, 1, 1, 2, 2, 2, 2, 1, 2, 2, 1};
  t.x.resize(12, 0);
  t.stratum_names = {"a", "b"};
  return t;
}

// One stratum of four units, built so every variance ingredient is a short
// fraction:  (y, arm, xi) = (2,1,1), (0,0,0), (4,1,3), (2,0,2).
Trial quartet() {
  Trial t;
  t.y.resize(4);
  t.y << 2.0, 0.0, 4.0, 2.0;
  t.arm = {1, 0, 1, 0};
  t.stratum = {1, 1, 1, 1};
  t.x.resize(4, 0);
  t.stratum_names = {"only"};
  return t;
}

}  // namespace

TEST_CASE("normal quantiles against frozen reference values") {
  CHECK(calib::normal_quantile(0.975) ==
        doctest::Approx(1.9599639845400545).epsilon(1e-9));
  CHECK(calib::normal_quantile(0.95) ==
        doctest::Approx(1.6448536269514722).epsilon(1e-9));
  CHECK(calib::normal_quantile(0.995) ==
        doctest::Approx(2.5758293035489004).epsilon(1e-9));
  CHECK(calib::normal_quantile(0.999) ==
        doctest::Approx(3.090232306167813).epsilon(1e-9));
  CHECK(calib::normal_quantile(0.5) == doctest::Approx(0.0).scale(1.0));
  for (double p : {0.01, 0.2, 0.77}) {
    CHECK(calib::normal_quantile(p) ==
          doctest::Approx(-calib::normal_quantile(1.0 - p)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(calib::normal_quantile(0.0), calib::InvalidInput);
  CHECK_THROWS_AS(calib::normal_quantile(1.0), calib::InvalidInput);
}

TEST_CASE("proxy-free components match hand arithmetic") {
  // Both strata have 6 units, rank 0, so df = 6/5.
  //   contrasts: 2.1 and 2.9 around the overall 2.5 -> var_h = 1.2*0.5*0.16*2
  //   stratum a: ss1 = 0.32, ss0 = 0.02;  stratum b: ss1 = 1.12/1.5, ss0 = 0.38/3
  const auto vc = calib::variance_components(toy_trial(), Matrix(12, 0));
  CHECK(vc.df[1] == doctest::Approx(1.2));
  CHECK(vc.df[2] == doctest::Approx(1.2));
  CHECK(vc.stratum_rank[1] == 0);
  CHECK(vc.var_h == doctest::Approx(0.192).epsilon(1e-12));
  CHECK(vc.var_y == doctest::Approx(0.4853333333333334).epsilon(1e-12));
  CHECK(vc.var_explained == 0.0);
}

TEST_CASE("one-stratum components with a proxy match hand arithmetic") {
  //   ybar1 = 3, ybar0 = 1, xibar = 1.5, pi = 1/2
  //   Gamma  = (0.5 + 1.5 + 1.5 + 0.5) / 4          = 1
  //   Sigma  = 0.25 (0.25 + 2.25 + 2.25 + 0.25) / 4 = 0.3125
  //   rank 1, df = 4 / (4 - 2) = 2
  //   var_y         = 2 (2/2 + 2/2) / 0.5           = 8
  //   var_explained = 2 * 1 / 0.3125                = 6.4
  const Trial t = quartet();
  Matrix xi(4, 1);
  xi << 1.0, 0.0, 3.0, 2.0;
  const auto vc = calib::variance_components(t, xi);
  CHECK(vc.stratum_rank[1] == 1);
  CHECK(vc.df[1] == doctest::Approx(2.0));
  CHECK(vc.var_h == doctest::Approx(0.0).scale(1.0));
  CHECK(vc.var_y == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(vc.var_explained == doctest::Approx(6.4).epsilon(1e-12));

  const auto ci = calib::confidence_interval(2.0, vc, t.n(), 0.95);
  CHECK(ci.se == doctest::Approx(std::sqrt(1.6 / 4.0)).epsilon(1e-12));
  CHECK(ci.hi - ci.lo ==
        doctest::Approx(2.0 * 1.9599639845400545 * ci.se).epsilon(1e-9));
}

TEST_CASE("duplicated proxy columns do not change rank or the explained part") {
  const Trial t = quartet();
  Matrix xi(4, 1);
  xi << 1.0, 0.0, 3.0, 2.0;
  Matrix xi2(4, 2);
  xi2 << xi, xi;
  const auto one = calib::variance_components(t, xi);
  const auto two = calib::variance_components(t, xi2);
  CHECK(two.stratum_rank[1] == 1);  // numerical rank, not column count
  CHECK(two.df[1] == one.df[1]);
  CHECK(two.var_explained == doctest::Approx(one.var_explained).epsilon(1e-10));
}

TEST_CASE("a stratum too small for its proxy rank throws") {
  Trial t;
  t.y.resize(6);
  t.y << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0;
  t.arm = {1, 0, 1, 0, 1, 0};
  t.stratum = {1, 1, 1, 1, 2, 2};  // stratum 2 has two units
  t.x.resize(6, 0);
  t.stratum_names = {"1", "2"};
  Matrix xi(6, 1);
  xi << 0.0, 1.0, 2.0, 3.0, 4.0, 5.0;
  try {
    calib::variance_components(t, xi);
    FAIL("expected InsufficientDf");
  } catch (const calib::InsufficientDf& e) {
    CHECK(e.stratum == 2);
  }
  // Turning the adjustment off skips the guard and uses df = 1.
  VarianceOptions opts;
  opts.df_adjust = false;
  const auto vc = calib::variance_components(t, xi, opts);
  CHECK(vc.df[2] == 1.0);
}

TEST_CASE("explained variance grows with extra informative columns") {
  // With df pinned to 1, adding a column can only help the projection.
  calib::Rng rng(2024);
  Trial t;
  const int n = 60;
  t.y.resize(n);
  t.x.resize(n, 0);
  t.arm.resize(n);
  t.stratum.assign(n, 1);
  Matrix xi(n, 2);
  for (int i = 0; i < n; ++i) {
    t.arm[i] = i % 2;
    xi(i, 0) = rng.normal();
    xi(i, 1) = rng.normal();
    t.y(i) = xi(i, 0) + 0.5 * xi(i, 1) + rng.normal();
  }
  t.stratum_names = {"1"};
  VarianceOptions opts;
  opts.df_adjust = false;
  const auto one = calib::variance_components(t, xi.leftCols(1), opts);
  const auto two = calib::variance_components(t, xi, opts);
  CHECK(two.var_explained >= one.var_explained - 1e-10);
  CHECK(two.var_y == doctest::Approx(one.var_y));  // xi does not touch var_y
}

TEST_CASE("a non-positive variance total is an inference error") {
  VarianceComponents vc;
  vc.var_h = 0.3;
  vc.var_y = 0.7;
  vc.var_explained = 1.5;
  CHECK_THROWS_AS(calib::confidence_interval(0.0, vc, 100, 0.95),
                  calib::InferenceError);
  vc.var_explained = 0.5;
  CHECK_NOTHROW(calib::confidence_interval(0.0, vc, 100, 0.95));
  CHECK_THROWS_AS(calib::confidence_interval(0.0, vc, 100, 1.0),
                  calib::InvalidInput);
}
