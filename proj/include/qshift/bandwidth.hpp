#pragma once

#include "qshift/lrv.hpp"

namespace qshift {

enum class TestMode { SIT, SCB };

// Selected tuning parameters for one series. b_sit/b_scb hold the exact rule
// values 2*C*b_mean*n^{-1/45} and 2*C*b_mean; b_used is the feasibility-
// clamped bandwidth actually applied downstream.
struct TuningSelection {
  double b_mean = 0.0;
  double C_s = 1.0;
  double b_sit = 0.0;
  double b_scb = 0.0;
  double h = 0.0;
  int M_s = 0;
  double w_n = 0.0;
  double b_used = 0.0;
  std::vector<double> b_candidates;
  std::vector<double> w_candidates;
};

struct MeanFitPoint {
  Eigen::VectorXd beta0;
  Eigen::VectorXd beta1;
  double fitted = 0.0;    // x_row' beta0 at the row's own time
  double hat_diag = 0.0;  // D(b) diagonal entry for that row
};

// Kernel-weighted least squares with regressors [x, x*(i/n - t)] at time t;
// `row` identifies the observation whose fitted value / hat diagonal is wanted.
MeanFitPoint local_linear_mean_fit(const RegressionSample& sample, double b, KernelId K,
                                   double t, int row);

struct GcvValue {
  double gcv = 0.0;
  double rss = 0.0;
  double trace = 0.0;
};

// GCV(b) = (n^{-1} ||yhat - y||^2) / (1 - trace(D)/n)^2.
GcvValue gcv_objective(const RegressionSample& sample, double b, KernelId K);

// Fitted values of the local linear mean regression at the observation times.
std::vector<double> mean_fitted_values(const RegressionSample& sample, double b, KernelId K);

// Argmin of GCV over candidates; infeasible candidates (degenerate designs,
// trace(D) >= n) are skipped; ties go to the smaller bandwidth.
double gcv_select(const RegressionSample& sample, const std::vector<double>& candidates,
                  KernelId K);

// C_s = ( int M_1(t) dt / int trace(Mtilde(t)) dt )^{1/5}; the numerator runs
// the quantile-path LRV with c = 1, the denominator mirrors it on the mean
// regression with psi_tau replaced by the mean residual.
double correction_factor(const RegressionSample& sample, const LocalLinearFit& pilot_fit,
                         double tau, double b, int M, double w_n, KernelId K,
                         WarningLog& warnings);

// Minimum-volatility selection: ise(l) integrates the sample variance of u
// consecutive curves over the grid; returns candidates[l' + u/2].
double min_volatility_w(const std::vector<double>& candidates,
                        const std::vector<McEstimate>& curves, int u);

std::vector<double> default_b_candidates();
std::vector<double> default_w_factors();  // scaled by the residual spread

// h = n^{-1/3}, M = floor(n^{1/3}); the b rule is applied once b_mean and C_s
// are known.
TuningSelection default_tuning(int n, TestMode mode);

inline double sit_bandwidth_multiplier(int n) {
  return std::pow(static_cast<double>(n), -1.0 / 45.0);
}

}  // namespace qshift
