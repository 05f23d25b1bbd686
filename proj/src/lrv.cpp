#include "qshift/lrv.hpp"

#include <Eigen/Eigenvalues>

namespace qshift {

namespace {

constexpr double kCondLimit = 1e10;

// Floor division for possibly negative numerators.
inline int floor_div(long long a, long long b) {
  long long q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return static_cast<int>(q);
}

// Solves Sigma^{-1} c with a condition check.
Eigen::VectorXd solve_sigma(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& c) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma);
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  if (!(lmin > 0.0) || lmax / lmin > kCondLimit)
    throw Error(ErrorKind::SingularSigma, "Sigma-hat is near-singular");
  return es.eigenvectors() *
         (es.eigenvectors().transpose() * c).cwiseQuotient(es.eigenvalues());
}

}  // namespace

namespace {

Eigen::VectorXd interp_rows(const Eigen::MatrixXd& rows, const std::vector<double>& g,
                            double t) {
  if (t <= g.front()) return rows.row(0).transpose();
  if (t >= g.back()) return rows.row(static_cast<int>(g.size()) - 1).transpose();
  const auto it = std::upper_bound(g.begin(), g.end(), t);
  const int j = static_cast<int>(it - g.begin());
  const double wgt = (t - g[j - 1]) / (g[j] - g[j - 1]);
  return (1.0 - wgt) * rows.row(j - 1).transpose() + wgt * rows.row(j).transpose();
}

}  // namespace

Eigen::VectorXd theta0_at(const LocalLinearFit& fit, double t) {
  return interp_rows(fit.theta0, fit.grid, t);
}

std::vector<double> own_time_residuals(const RegressionSample& sample,
                                       const LocalLinearFit& fit) {
  const int n = sample.n();
  std::vector<double> r(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd th = theta0_at(fit, sample.time_of(i));
    r[static_cast<std::size_t>(i)] = sample.y(i) - sample.X.row(i).dot(th);
  }
  return r;
}

Eigen::MatrixXd sigma_hat(const RegressionSample& sample, const LocalLinearFit& fit,
                          double w_n, double b, KernelId K, double t) {
  if (!(w_n > 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma_hat requires w_n > 0");
  const int n = sample.n();
  const int p = sample.p();
  // Full local-linear residuals: the slope term keeps window-edge points from
  // drifting out of the density kernel and deflating Sigma-hat.
  const Eigen::VectorXd th0 = interp_rows(fit.theta0, fit.grid, t);
  const Eigen::VectorXd th1 = interp_rows(fit.theta1, fit.grid, t);
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < n; ++i) {
    const double dt = sample.time_of(i) - t;
    const double kw = kernel_eval(K, dt / b);
    if (kw <= 0.0) continue;
    const double e = sample.y(i) - sample.X.row(i).dot(th0) - sample.X.row(i).dot(th1) * dt;
    const double c = normal_pdf(e / w_n) * kw;
    if (c > 0.0) S.selfadjointView<Eigen::Lower>().rankUpdate(sample.X.row(i).transpose(), c);
  }
  S.triangularView<Eigen::Upper>() = S.transpose();
  return S / (n * b * w_n);
}

Eigen::VectorXd xi_hat(const RegressionSample& sample, const std::vector<double>& own_resid,
                       double tau, int M, int i) {
  const int n = sample.n();
  if (i < M + 1 || i > n - M)
    throw Error(ErrorKind::IndexOutOfWindow,
                "xi_hat index " + std::to_string(i) + " outside [M+1, n-M]");
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(sample.p());
  for (int j = -M; j <= M; ++j) {
    const int k = i + j;  // 1-based
    const double psi = tau - (own_resid[static_cast<std::size_t>(k - 1)] <= 0.0 ? 1.0 : 0.0);
    xi += psi * sample.X.row(k - 1).transpose();
  }
  return xi;
}

Eigen::MatrixXd v_hat(const RegressionSample& sample, const std::vector<double>& own_resid,
                      double tau, int M, double b, KernelId K, double t) {
  const int n = sample.n();
  const int p = sample.p();
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(p, p);
  for (int i = M + 1; i <= n - M; ++i) {
    const double kw = kernel_eval(K, (static_cast<double>(i) / n - t) / b);
    if (kw <= 0.0) continue;
    const Eigen::VectorXd xi = xi_hat(sample, own_resid, tau, M, i);
    V.selfadjointView<Eigen::Lower>().rankUpdate(xi, kw / (2.0 * M + 1.0));
  }
  V.triangularView<Eigen::Upper>() = V.transpose();
  V /= (n * b);
  return 0.5 * (V + V.transpose());
}

double m_c_scalar(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& v,
                  const Eigen::VectorXd& c, WarningLog* warnings) {
  const Eigen::VectorXd a = solve_sigma(sigma, c);
  double q = a.dot(v * a);
  if (q < 0.0) {
    if (warnings) ++warnings->clip_count;
    q = 0.0;
  }
  return std::sqrt(q);
}

McEstimate m_c_curve(const RegressionSample& sample, const LocalLinearFit& fit, double tau,
                     const LrvTuning& tuning, KernelId K, const std::vector<double>& grid,
                     const Eigen::VectorXd& c, WarningLog& warnings) {
  const std::vector<McEstimate> one =
      m_c_curves_for_w(sample, fit, tau, tuning.b, tuning.M, K, grid, c, {tuning.w_n},
                       warnings);
  return one.front();
}

std::vector<McEstimate> m_c_curves_for_w(const RegressionSample& sample,
                                         const LocalLinearFit& fit, double tau, double b,
                                         int M, KernelId K, const std::vector<double>& grid,
                                         const Eigen::VectorXd& c,
                                         const std::vector<double>& w_candidates,
                                         WarningLog& warnings) {
  const int n = sample.n();
  const std::vector<double> own_resid = own_time_residuals(sample, fit);

  double t_lo = b + static_cast<double>(M + 1) / n;
  double t_hi = 1.0 - b - static_cast<double>(M + 1) / n;
  if (t_lo > t_hi) {
    warnings.add("LRV boundary window degenerate; collapsing to midpoint");
    t_lo = t_hi = 0.5;
  }

  std::vector<McEstimate> out(w_candidates.size());
  for (auto& mc : out) {
    mc.grid = grid;
    mc.t_lo = t_lo;
    mc.t_hi = t_hi;
    mc.sigma.resize(grid.size());
    mc.v.resize(grid.size());
    mc.m_c.resize(grid.size());
  }

  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double t = std::clamp(grid[j], t_lo, t_hi);  // constant extension
    const Eigen::MatrixXd V = v_hat(sample, own_resid, tau, M, b, K, t);
    for (std::size_t wi = 0; wi < w_candidates.size(); ++wi) {
      const Eigen::MatrixXd S = sigma_hat(sample, fit, w_candidates[wi], b, K, t);
      try {
        out[wi].m_c[j] = m_c_scalar(S, V, c, &warnings);
      } catch (const Error& e) {
        throw Error(e.kind(), std::string(e.what()) + " [t=" + std::to_string(t) + "]");
      }
      out[wi].sigma[j] = S;
      out[wi].v[j] = V;
    }
  }
  return out;
}

std::optional<Eigen::VectorXd> xi_tilde_stacked(const RegressionSample& s1,
                                                const RegressionSample& s2,
                                                const std::vector<double>& resid1,
                                                const std::vector<double>& resid2,
                                                double tau, int M, int i) {
  const int n1 = s1.n(), n2 = s2.n();
  const int p1 = s1.p(), p2 = s2.p();
  Eigen::VectorXd xi = Eigen::VectorXd::Zero(p1 + p2);

  const int c1 = floor_div(static_cast<long long>(i) * n1, n2);
  for (int j = -M; j <= M; ++j) {
    const int k1 = c1 + floor_div(static_cast<long long>(j) * n1, n2);
    const int k2 = i + j;
    if (k1 < 1 || k1 > n1 || k2 < 1 || k2 > n2) return std::nullopt;
    const double psi1 = tau - (resid1[static_cast<std::size_t>(k1 - 1)] <= 0.0 ? 1.0 : 0.0);
    const double psi2 = tau - (resid2[static_cast<std::size_t>(k2 - 1)] <= 0.0 ? 1.0 : 0.0);
    xi.head(p1) += psi1 * s1.X.row(k1 - 1).transpose();
    xi.tail(p2) += psi2 * s2.X.row(k2 - 1).transpose();
  }
  return xi;
}

Eigen::MatrixXd joint_v_hat(const RegressionSample& s1, const RegressionSample& s2,
                            const std::vector<double>& resid1,
                            const std::vector<double>& resid2, double tau, int M, double b2,
                            KernelId K, double t) {
  const int n2 = s2.n();
  const int d = s1.p() + s2.p();
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(d, d);
  for (int i = 1; i <= n2; ++i) {
    const double kw = kernel_eval(K, (static_cast<double>(i) / n2 - t) / b2);
    if (kw <= 0.0) continue;
    const auto xi = xi_tilde_stacked(s1, s2, resid1, resid2, tau, M, i);
    if (!xi) continue;
    V.selfadjointView<Eigen::Lower>().rankUpdate(*xi, kw / (2.0 * M + 1.0));
  }
  V.triangularView<Eigen::Upper>() = V.transpose();
  V /= (n2 * b2);
  return 0.5 * (V + V.transpose());
}

Eigen::Matrix2d m_c_matrix(const Eigen::MatrixXd& sigma1, const Eigen::MatrixXd& sigma2,
                           const Eigen::MatrixXd& v_joint, const Eigen::VectorXd& c1,
                           const Eigen::VectorXd& c2, WarningLog* warnings) {
  const int p1 = static_cast<int>(sigma1.rows());
  const int p2 = static_cast<int>(sigma2.rows());
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(2, p1 + p2);
  B.row(0).head(p1) = solve_sigma(sigma1, c1).transpose();
  B.row(1).tail(p2) = solve_sigma(sigma2, c2).transpose();

  Eigen::Matrix2d S = B * v_joint * B.transpose();
  S = 0.5 * (S + S.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(S);
  Eigen::Vector2d lam = es.eigenvalues();
  for (int k = 0; k < 2; ++k) {
    if (lam(k) < 0.0) {
      if (warnings) ++warnings->clip_count;
      lam(k) = 0.0;
    }
  }
  const Eigen::Matrix2d R =
      es.eigenvectors() * lam.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (R + R.transpose());
}

JointMcEstimate joint_m_c_curve(const RegressionSample& s1, const RegressionSample& s2,
                                const LocalLinearFit& fit1, const LocalLinearFit& fit2,
                                double tau, const LrvTuning& tune1, const LrvTuning& tune2,
                                int M_joint, KernelId K, const std::vector<double>& grid,
                                const Eigen::VectorXd& c1, const Eigen::VectorXd& c2,
                                WarningLog& warnings) {
  if (s1.n() < s2.n())
    throw Error(ErrorKind::InvalidArgument, "joint path requires n1 >= n2");
  const std::vector<double> r1 = own_time_residuals(s1, fit1);
  const std::vector<double> r2 = own_time_residuals(s2, fit2);

  const double buffer = static_cast<double>(M_joint + 1) / s2.n();
  double t_lo = std::max(tune1.b, tune2.b) + buffer;
  double t_hi = 1.0 - t_lo;
  if (t_lo > t_hi) {
    warnings.add("joint LRV boundary window degenerate; collapsing to midpoint");
    t_lo = t_hi = 0.5;
  }

  JointMcEstimate out;
  out.grid = grid;
  out.t_lo = t_lo;
  out.t_hi = t_hi;
  out.m11.resize(grid.size());
  out.m12.resize(grid.size());
  out.m22.resize(grid.size());

  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double t = std::clamp(grid[j], t_lo, t_hi);
    const Eigen::MatrixXd V = joint_v_hat(s1, s2, r1, r2, tau, M_joint, tune2.b, K, t);
    const Eigen::MatrixXd S1 = sigma_hat(s1, fit1, tune1.w_n, tune1.b, K, t);
    const Eigen::MatrixXd S2 = sigma_hat(s2, fit2, tune2.w_n, tune2.b, K, t);
    Eigen::Matrix2d Mc;
    try {
      Mc = m_c_matrix(S1, S2, V, c1, c2, &warnings);
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + " [t=" + std::to_string(t) + "]");
    }
    out.m11[j] = Mc(0, 0);
    out.m12[j] = Mc(0, 1);
    out.m22[j] = Mc(1, 1);
  }
  return out;
}

}  // namespace qshift
