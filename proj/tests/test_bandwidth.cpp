#include <doctest.h>

#include "qshift/bandwidth.hpp"
#include "qshift/simulate.hpp"

using namespace qshift;

namespace {

RegressionSample linear_sample(int n, std::uint64_t seed, double noise) {
  Rng rng(seed);
  RegressionSample s;
  s.X.resize(n, 1);
  s.y.resize(n);
  for (int i = 0; i < n; ++i) {
    s.X(i, 0) = 1.0;
    s.y(i) = 0.5 + 2.0 * s.time_of(i) + noise * rng.normal();
  }
  return s;
}

// Naive GCV: builds the full hat matrix row by row.
double naive_gcv(const RegressionSample& s, double b, KernelId K) {
  const int n = s.n();
  const int p = s.p();
  double rss = 0.0, trace = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = s.time_of(i);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * p, 2 * p);
    Eigen::VectorXd z(2 * p);
    for (int j = 0; j < n; ++j) {
      const double w = kernel_eval(K, (s.time_of(j) - t) / b);
      if (w <= 0.0) continue;
      const double dt = s.time_of(j) - t;
      z.head(p) = s.X.row(j).transpose();
      z.tail(p) = s.X.row(j).transpose() * dt;
      A += w * z * z.transpose();
    }
    Eigen::VectorXd u = Eigen::VectorXd::Zero(2 * p);
    u.head(p) = s.X.row(i).transpose();
    const Eigen::VectorXd Au = A.ldlt().solve(u);
    double yhat = 0.0;
    for (int j = 0; j < n; ++j) {
      const double w = kernel_eval(K, (s.time_of(j) - t) / b);
      if (w <= 0.0) continue;
      const double dt = s.time_of(j) - t;
      z.head(p) = s.X.row(j).transpose();
      z.tail(p) = s.X.row(j).transpose() * dt;
      const double dij = w * Au.dot(z);
      yhat += dij * s.y(j);
      if (j == i) trace += dij;
    }
    rss += (s.y(i) - yhat) * (s.y(i) - yhat);
  }
  return (rss / n) / std::pow(1.0 - trace / n, 2.0);
}

}  // namespace

TEST_CASE("mean fit reproduces constants and linears") {
  const int n = 60;
  RegressionSample s;
  s.X = Eigen::MatrixXd::Ones(n, 1);
  s.y = Eigen::VectorXd::Constant(n, 3.25);
  for (double t : {0.1, 0.5, 0.93}) {
    const MeanFitPoint f = local_linear_mean_fit(s, 0.25, KernelId::epanechnikov, t, -1);
    CHECK(f.beta0(0) == doctest::Approx(3.25).epsilon(1e-10));
  }

  const RegressionSample lin = linear_sample(n, 1, 0.0);
  for (int i : {5, 30, 55}) {
    const MeanFitPoint f =
        local_linear_mean_fit(lin, 0.25, KernelId::epanechnikov, lin.time_of(i), i);
    CHECK(f.fitted == doctest::Approx(lin.y(i)).epsilon(1e-9));
  }
}

TEST_CASE("hat matrix rows sum to one") {
  const int n = 50;
  const RegressionSample s = linear_sample(n, 2, 0.5);
  const double b = 0.3;
  // sum_j D_ij = fitted value of the all-ones response
  RegressionSample ones = s;
  ones.y = Eigen::VectorXd::Ones(n);
  for (int i : {0, 10, 25, 49}) {
    const MeanFitPoint f =
        local_linear_mean_fit(ones, b, KernelId::epanechnikov, s.time_of(i), i);
    CHECK(f.fitted == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("gcv equals the naive evaluation") {
  const RegressionSample s = linear_sample(80, 3, 0.7);
  for (double b : {0.15, 0.25, 0.4}) {
    const GcvValue v = gcv_objective(s, b, KernelId::epanechnikov);
    CHECK(v.gcv == doctest::Approx(naive_gcv(s, b, KernelId::epanechnikov)).epsilon(1e-10));
  }
}

TEST_CASE("gcv selection matches the oracle argmin") {
  const std::vector<double> cands{0.12, 0.18, 0.24, 0.3, 0.36};
  for (std::uint64_t seed : {4u, 5u, 6u}) {
    const RegressionSample s = linear_sample(90, seed, 0.8);
    const double chosen = gcv_select(s, cands, KernelId::epanechnikov);
    double best = cands.front();
    double best_v = std::numeric_limits<double>::infinity();
    for (const double b : cands) {
      const double v = naive_gcv(s, b, KernelId::epanechnikov);
      if (v < best_v) {
        best_v = v;
        best = b;
      }
    }
    CHECK(chosen == doctest::Approx(best));
  }
  // noiseless case: implementation agrees with its own oracle evaluation
  const RegressionSample noiseless = linear_sample(60, 7, 0.0);
  const double chosen = gcv_select(noiseless, cands, KernelId::epanechnikov);
  double best = cands.front();
  double best_v = std::numeric_limits<double>::infinity();
  for (const double b : cands) {
    const double v = naive_gcv(noiseless, b, KernelId::epanechnikov);
    if (v < best_v) {
      best_v = v;
      best = b;
    }
  }
  CHECK(chosen == doctest::Approx(best));
}

TEST_CASE("gcv single candidate and infeasible grids") {
  const RegressionSample s = linear_sample(60, 8, 0.5);
  CHECK(gcv_select(s, {0.2}, KernelId::epanechnikov) == doctest::Approx(0.2));
  CHECK_THROWS_AS(gcv_select(s, {0.001}, KernelId::epanechnikov), Error);
}

TEST_CASE("correction factor on the iid unit design") {
  const int n = 2000;
  Rng rng(99);
  RegressionSample s;
  s.X = Eigen::MatrixXd::Ones(n, 1);
  s.y.resize(n);
  for (int i = 0; i < n; ++i) s.y(i) = rng.normal();

  QuantileFitConfig cfg;
  cfg.tau = 0.5;
  cfg.bandwidth = 0.2;
  cfg.grid_size = 100;
  const LocalLinearFit pilot = fit_curve_grid(s, cfg);
  WarningLog warn;
  const double C = correction_factor(s, pilot, 0.5, 0.2, 12, 0.15,
                                     KernelId::epanechnikov, warn);
  // analytic: M_1 = sqrt(tau(1-tau))/phi(0) ~ 1.2533, trace Mtilde = Var(e) = 1
  CHECK(std::abs(C - 1.046) < 0.05);
}

TEST_CASE("minimum volatility selection") {
  const std::vector<double> cands{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7};
  const auto flat_curve = [&](double v) {
    McEstimate mc;
    mc.grid = uniform_grid(0.0, 1.0, 10);
    mc.m_c.assign(mc.grid.size(), v);
    mc.t_lo = 0.0;
    mc.t_hi = 1.0;
    return mc;
  };

  std::vector<McEstimate> identical;
  for (std::size_t i = 0; i < cands.size(); ++i) identical.push_back(flat_curve(2.0));
  CHECK(min_volatility_w(cands, identical, 5) == doctest::Approx(cands[2]));

  // hand-computed pattern: window variances 12.3, 8.3, 10.7 -> l' = 1
  std::vector<McEstimate> pattern;
  for (const double v : {9.0, 4.0, 1.0, 4.0, 9.0, 4.0, 1.0}) pattern.push_back(flat_curve(v));
  CHECK(min_volatility_w(cands, pattern, 5) == doctest::Approx(cands[3]));

  // shifting every curve by a constant leaves the choice unchanged
  std::vector<McEstimate> shifted = pattern;
  for (auto& mc : shifted)
    for (auto& v : mc.m_c) v += 7.0;
  CHECK(min_volatility_w(cands, shifted, 5) == doctest::Approx(cands[3]));

  const std::vector<double> four(cands.begin(), cands.begin() + 4);
  std::vector<McEstimate> four_curves(pattern.begin(), pattern.begin() + 4);
  CHECK_THROWS_AS(min_volatility_w(four, four_curves, 5), Error);
}

TEST_CASE("default tuning rules") {
  const TuningSelection t = default_tuning(1000, TestMode::SIT);
  CHECK(t.h == doctest::Approx(std::pow(1000.0, -1.0 / 3.0)));
  CHECK(t.M_s == 10);
  CHECK(sit_bandwidth_multiplier(1000) == doctest::Approx(0.85770).epsilon(1e-4));
  CHECK(default_tuning(125, TestMode::SCB).M_s == 5);
  CHECK_THROWS_AS(default_tuning(5, TestMode::SIT), Error);
}

TEST_CASE("bandwidth rule identities after a full run") {
  DgpSpec spec;
  spec.example = ExampleId::Ex1;
  spec.n = 100;
  spec.tau = 0.5;
  spec.seed = 77;
  const GeneratedPair pair = make_example(spec);
  RunOverrides cfg;
  cfg.Q = 50;
  const TestReport rep = run_test(pair.s1, pair.s2, pair.c1, pair.c2, 0.5, TestMode::SIT,
                                  Dependence::independent, cfg, 5);
  for (const TuningSelection* t : {&rep.tuning1, &rep.tuning2}) {
    CHECK(t->b_sit ==
          2.0 * t->C_s * t->b_mean * sit_bandwidth_multiplier(spec.n));  // exact
    CHECK(t->b_scb == 2.0 * t->C_s * t->b_mean);
    CHECK(t->b_sit < t->b_scb);
  }
}
