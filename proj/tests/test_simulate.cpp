#include <doctest.h>

#include "qshift/simulate.hpp"

using namespace qshift;

TEST_CASE("error recursion variance near the AR-free point") {
  // a(0.3) = 0: stationary variance 1 there
  const int n = 200;
  const int idx = static_cast<int>(0.3 * n) - 1;
  double ss = 0.0;
  const int seeds = 200;
  for (int s = 0; s < seeds; ++s) {
    const std::vector<double> e = gen_error_series(n, 1, 1000 + s);
    ss += e[static_cast<std::size_t>(idx)] * e[static_cast<std::size_t>(idx)];
  }
  CHECK(ss / seeds == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("seeded reproducibility of generators") {
  CHECK(gen_error_series(50, 1, 9) == gen_error_series(50, 1, 9));
  CHECK(gen_error_series(50, 2, 9) != gen_error_series(50, 1, 9));
  const Eigen::MatrixXd a = gen_covariates(40, 3, 1, 4);
  const Eigen::MatrixXd b = gen_covariates(40, 3, 1, 4);
  CHECK((a - b).norm() == 0.0);
}

TEST_CASE("innovation laws are standardized") {
  Rng rng(123);
  double ss = 0.0;
  const int m = 100000;
  for (int i = 0; i < m; ++i) {
    const double v = rng.student_t(5) / std::sqrt(5.0 / 3.0);
    ss += v * v;
  }
  CHECK(ss / m == doctest::Approx(1.0).epsilon(0.05));

  Rng rng2(321);
  double mean3 = 0.0;
  for (int i = 0; i < m; ++i) mean3 += rng2.chi_squared(3) / 3.0;
  CHECK(mean3 / m == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("covariates positive near the AR-free point") {
  const int n = 100;
  for (int s = 0; s < 20; ++s) {
    const Eigen::MatrixXd X = gen_covariates(n, 2, 1, 50 + s);
    const int idx = static_cast<int>(0.3 * n) - 1;
    CHECK(X(idx, 0) > 0.0);
    CHECK(X(idx, 1) > 0.0);
  }
}

TEST_CASE("median centering is a null operation for symmetric laws") {
  for (const ErrorKindTag kind :
       {ErrorKindTag::series1_normal, ErrorKindTag::series2_t5, ErrorKindTag::mix_primary,
        ErrorKindTag::mix_secondary}) {
    for (double t = 0.05; t <= 1.0; t += 0.05)
      CHECK(std::abs(marginal_quantile(t, 0.5, kind)) <= 0.01);
  }
}

TEST_CASE("analytic centering for the normal series") {
  CHECK(marginal_quantile(0.3, 0.8, ErrorKindTag::series1_normal) ==
        doctest::Approx(0.8416).epsilon(1e-3));
  const double a = 0.6 * 0.49;  // t = 1: sigma = 1/sqrt(1-a^2)
  CHECK(marginal_quantile(1.0, 0.8, ErrorKindTag::series1_normal) ==
        doctest::Approx(0.8416 / std::sqrt(1.0 - a * a)).epsilon(1e-3));
}

TEST_CASE("centered errors hit the target quantile level") {
  const int n = 100000;
  const std::vector<double> raw = gen_error_series(n, 2, 2024);
  const std::vector<double> centered = center_errors(raw, 0.7, ErrorKindTag::series2_t5, n);
  int below = 0;
  for (const double v : centered) below += (v <= 0.0);
  CHECK(static_cast<double>(below) / n == doctest::Approx(0.7).epsilon(0.015));
}

TEST_CASE("dependent mixing preserves the variance structure") {
  const int n = 100000;
  const std::vector<double> e1 = gen_error_series(n, 1, 31);
  const std::vector<double> e2 = gen_error_series(n, 2, 32);
  // near t = 0.3 both chains have unit variance and the mix 0.64 + 0.04
  double ss = 0.0;
  int cnt = 0;
  for (int i = static_cast<int>(0.28 * n); i < static_cast<int>(0.32 * n); ++i) {
    const double v = 0.8 * e1[static_cast<std::size_t>(i)] + 0.2 * e2[static_cast<std::size_t>(i)];
    ss += v * v;
    ++cnt;
  }
  CHECK(ss / cnt == doctest::Approx(0.68).epsilon(0.05));
}

TEST_CASE("example designs") {
  CHECK(true_m(ExampleId::Ex1, 1, 0.5, 100) == doctest::Approx(0.5 + std::log(0.5)));
  // null designs shift by 0.1 on the overlap
  for (double t = 0.2; t <= 1.0; t += 0.1) {
    CHECK(true_m(ExampleId::Ex1, 2, t, 1000) ==
          doctest::Approx(true_m(ExampleId::Ex1, 1, t - 0.1, 1000)).epsilon(1e-12));
    CHECK(true_m(ExampleId::Ex2, 2, t, 1000) ==
          doctest::Approx(true_m(ExampleId::Ex2, 1, t - 0.1, 1000)).epsilon(1e-12));
    CHECK(true_m(ExampleId::NM1, 2, t, 1000) ==
          doctest::Approx(true_m(ExampleId::NM1, 1, t - 0.1, 1000)).epsilon(1e-12));
  }
  // NM2 is non-monotone and not shift invariant
  CHECK(true_m(ExampleId::NM2, 1, 0.2, 100) == doctest::Approx(0.2 * 0.3 * 0.8));
  CHECK(true_m(ExampleId::NM2, 2, 0.2, 100) == doctest::Approx(0.2 * 0.09 * 0.8));

  DgpSpec spec;
  spec.example = ExampleId::Ex1;
  spec.n = 100;
  spec.tau = 0.5;
  spec.seed = 5;
  const GeneratedPair pair = make_example(spec);
  CHECK(pair.s1.n() == 100);
  CHECK(pair.s1.p() == 2);
  CHECK(pair.c1.sum() == doctest::Approx(2.0));
  CHECK(pair.clamped_rows_s1 == 0);
  CHECK(pair.clamped_rows_s2 == 10);  // rows with i/n <= 0.1

  spec.example = ExampleId::Ex2;
  CHECK(make_example(spec).s1.p() == 3);
  spec.example = ExampleId::NM1;
  CHECK(make_example(spec).s1.p() == 1);
}

TEST_CASE("monte carlo harness basics") {
  McExperiment exp;
  exp.spec.example = ExampleId::Ex1;
  exp.spec.n = 60;
  exp.spec.tau = 0.5;
  exp.spec.seed = 17;
  exp.reps = 4;
  exp.Q = 40;
  exp.alphas = {0.0, 0.05};
  exp.overrides.b1 = exp.overrides.b2 = 0.35;
  exp.overrides.w1 = exp.overrides.w2 = 0.3;
  exp.overrides.M1 = exp.overrides.M2 = 3;

  const McResult res = monte_carlo(exp);
  CHECK(res.valid == 4);
  CHECK(res.rejection_rate.at(0.0) == 0.0);  // alpha = 0 never rejects

  const McResult res2 = monte_carlo(exp);
  CHECK(res.rejection_rate.at(0.05) == res2.rejection_rate.at(0.05));
  CHECK(res.mean_d_hat == res2.mean_d_hat);

  McExperiment shift = exp;
  shift.shift_only = true;
  const McResult res3 = monte_carlo(shift);
  CHECK(res3.valid == 4);
  CHECK(std::isfinite(res3.mean_d_hat));
}
