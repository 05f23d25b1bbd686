#pragma once

#include <optional>

#include "qshift/kernels.hpp"
#include "qshift/sample.hpp"

namespace qshift {

struct QuantileFitConfig {
  double tau = 0.5;
  double bandwidth = 0.2;
  KernelId kernel = KernelId::epanechnikov;
  int grid_size = 0;            // number of grid intervals G; 0 -> use n
  double solver_tol = 1e-8;
  int solver_max_iter = 200;

  void validate(int n, int p) const {
    if (!(tau > 0.0 && tau < 1.0))
      throw Error(ErrorKind::InvalidArgument, "tau must lie in (0,1)");
    if (!(bandwidth > 0.0 && bandwidth < 0.5))
      throw Error(ErrorKind::InvalidArgument, "bandwidth must lie in (0,0.5)");
    if (bandwidth * n < 2.0 * p)
      throw Error(ErrorKind::InvalidArgument,
                  "bandwidth*n must be >= 2p for interior support");
  }
};

// Check loss  rho_tau(r) = tau*r^+ + (1-tau)*r^-.
inline double check_loss(double tau, double r) {
  return r >= 0.0 ? tau * r : (tau - 1.0) * r;
}

// Local linear coefficient curves on an evaluation grid t_j = j/G, j=0..G.
struct LocalLinearFit {
  std::vector<double> grid;  // G+1 strictly increasing times in [0,1]
  Eigen::MatrixXd theta0;    // (G+1) x p
  Eigen::MatrixXd theta1;    // (G+1) x p, the derivative curves
  double bandwidth = 0.0;
};

// Jackknife-debiased curves and the scalar combinations m = c'theta.
struct DebiasedFit {
  std::vector<double> grid;
  Eigen::MatrixXd theta_tilde;        // (G+1) x p
  Eigen::MatrixXd theta_tilde_prime;  // (G+1) x p
  std::vector<double> m_hat;          // c'theta_tilde per grid point
  std::vector<double> m_hat_prime;    // c'theta_tilde_prime per grid point
  Eigen::VectorXd c;
  bool monotone_flag = false;  // strictly increasing m_hat on the grid

  double m_at(double t) const { return interp_linear(grid, m_hat, t); }
  double m_prime_at(double t) const { return interp_linear(grid, m_hat_prime, t); }
  double min_m() const { return *std::min_element(m_hat.begin(), m_hat.end()); }
  double max_m() const { return *std::max_element(m_hat.begin(), m_hat.end()); }
};

struct LocalFitResult {
  Eigen::VectorXd beta0;
  Eigen::VectorXd beta1;
  double objective = 0.0;
  int iterations = 0;
};

// Minimizes sum_i rho_tau(y_i - x_i'b0 - x_i'b1 (i/n - t)) K((i/n - t)/b).
// IRLS on the smoothed loss with annealed epsilon, then a vertex polish over
// the smallest-residual support points (the exact optimum interpolates 2p
// observations in general position).
LocalFitResult local_quantile_fit(const RegressionSample& sample,
                                  const QuantileFitConfig& cfg, double t);

LocalLinearFit fit_curve_grid(const RegressionSample& sample, const QuantileFitConfig& cfg);

// theta_tilde = 2*fit(b/sqrt2) - fit(b), applied to both coefficient and
// derivative curves; m_hat/m_hat_prime contracted with c.
DebiasedFit debias(const LocalLinearFit& fit_b, const LocalLinearFit& fit_b_sqrt2,
                   const Eigen::VectorXd& c);

// Convenience: fits at b and b/sqrt2 and debiases.
DebiasedFit fit_debiased(const RegressionSample& sample, const QuantileFitConfig& cfg,
                         const Eigen::VectorXd& c, LocalLinearFit* fit_b_out = nullptr);

}  // namespace qshift
