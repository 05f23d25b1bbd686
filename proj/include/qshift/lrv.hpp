#pragma once

#include "qshift/quantile_fit.hpp"

namespace qshift {

struct LrvTuning {
  double b = 0.2;   // time-smoothing bandwidth
  double w_n = 0.1; // density bandwidth in Sigma-hat
  int M = 3;        // gradient window half-width
};

// theta0 row of a fitted curve interpolated at time t.
Eigen::VectorXd theta0_at(const LocalLinearFit& fit, double t);

// Residuals evaluated at their own time points: e_i = y_i - x_i' theta((i+1)/n).
std::vector<double> own_time_residuals(const RegressionSample& sample,
                                       const LocalLinearFit& fit);

// Sigma-hat(t) = (1/(n b w)) sum_i phi(e_i(t)/w) x_i x_i' K_b(i/n - t).
Eigen::MatrixXd sigma_hat(const RegressionSample& sample, const LocalLinearFit& fit,
                          double w_n, double b, KernelId K, double t);

// Window sum Xi_i = sum_{j=-M}^{M} (tau - 1(e_{i+j} <= 0)) x_{i+j}, i 1-based
// in [M+1, n-M].
Eigen::VectorXd xi_hat(const RegressionSample& sample, const std::vector<double>& own_resid,
                       double tau, int M, int i);

// V-hat(t) = (1/(n b)) sum_i K_b(i/n - t) Xi_i Xi_i' / (2M+1), symmetrized.
Eigen::MatrixXd v_hat(const RegressionSample& sample, const std::vector<double>& own_resid,
                      double tau, int M, double b, KernelId K, double t);

// sqrt( c' Sigma^{-1} V Sigma^{-1} c ), V already estimating the squared
// long-run covariance; the quadratic form is clipped at zero before the root.
double m_c_scalar(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& v,
                  const Eigen::VectorXd& c, WarningLog* warnings = nullptr);

struct McEstimate {
  std::vector<double> grid;                 // evaluation times
  std::vector<Eigen::MatrixXd> sigma;       // Sigma-hat at clamped times
  std::vector<Eigen::MatrixXd> v;           // V-hat at clamped times
  std::vector<double> m_c;
  double t_lo = 0.0;                        // b + (M+1)/n
  double t_hi = 1.0;                        // 1 - b - (M+1)/n

  // Constant extension outside [t_lo, t_hi] is built into the stored values;
  // queries clamp then interpolate.
  double at(double t) const {
    return interp_linear(grid, m_c, std::clamp(t, t_lo, t_hi));
  }
};

McEstimate m_c_curve(const RegressionSample& sample, const LocalLinearFit& fit, double tau,
                     const LrvTuning& tuning, KernelId K, const std::vector<double>& grid,
                     const Eigen::VectorXd& c, WarningLog& warnings);

// One pass for several density bandwidths: V-hat is w-independent and reused.
std::vector<McEstimate> m_c_curves_for_w(const RegressionSample& sample,
                                         const LocalLinearFit& fit, double tau, double b,
                                         int M, KernelId K, const std::vector<double>& grid,
                                         const Eigen::VectorXd& c,
                                         const std::vector<double>& w_candidates,
                                         WarningLog& warnings);

// ---------------------------------------------------------------------------
// Dependent-series (joint) path
// ---------------------------------------------------------------------------

// Stacked window sum with resampled offsets floor(j n_s / n2); series 1 is
// centered at floor(i n1/n2). Returns the (p1+p2) vector for center i
// (1-based on the series-2 clock), or nullopt when an index leaves [1, n_s].
std::optional<Eigen::VectorXd> xi_tilde_stacked(const RegressionSample& s1,
                                                const RegressionSample& s2,
                                                const std::vector<double>& resid1,
                                                const std::vector<double>& resid2,
                                                double tau, int M, int i);

// Joint V-hat(t) over the series-2 clock with bandwidth b2.
Eigen::MatrixXd joint_v_hat(const RegressionSample& s1, const RegressionSample& s2,
                            const std::vector<double>& resid1,
                            const std::vector<double>& resid2, double tau, int M, double b2,
                            KernelId K, double t);

// 2x2 PSD square root of B V B' with B = blockdiag(c1' Sigma1^{-1}, c2' Sigma2^{-1}).
Eigen::Matrix2d m_c_matrix(const Eigen::MatrixXd& sigma1, const Eigen::MatrixXd& sigma2,
                           const Eigen::MatrixXd& v_joint, const Eigen::VectorXd& c1,
                           const Eigen::VectorXd& c2, WarningLog* warnings = nullptr);

struct JointMcEstimate {
  std::vector<double> grid;
  std::vector<double> m11, m12, m22;  // symmetric PSD matrix entries per grid time
  double t_lo = 0.0;
  double t_hi = 1.0;

  double at11(double t) const { return interp_linear(grid, m11, std::clamp(t, t_lo, t_hi)); }
  double at12(double t) const { return interp_linear(grid, m12, std::clamp(t, t_lo, t_hi)); }
  double at22(double t) const { return interp_linear(grid, m22, std::clamp(t, t_lo, t_hi)); }
};

JointMcEstimate joint_m_c_curve(const RegressionSample& s1, const RegressionSample& s2,
                                const LocalLinearFit& fit1, const LocalLinearFit& fit2,
                                double tau, const LrvTuning& tune1, const LrvTuning& tune2,
                                int M_joint, KernelId K, const std::vector<double>& grid,
                                const Eigen::VectorXd& c1, const Eigen::VectorXd& c2,
                                WarningLog& warnings);

}  // namespace qshift
