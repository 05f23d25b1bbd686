#include "qshift/bandwidth.hpp"

#include <Eigen/Eigenvalues>

namespace qshift {

namespace {
constexpr double kCondLimit = 1e10;

struct MeanSystem {
  Eigen::MatrixXd A;    // 2p x 2p weighted normal matrix
  Eigen::VectorXd rhs;  // 2p
  int support = 0;
};

MeanSystem assemble(const RegressionSample& sample, double b, KernelId K, double t) {
  const int n = sample.n();
  const int p = sample.p();
  const int q = 2 * p;
  MeanSystem sys;
  sys.A = Eigen::MatrixXd::Zero(q, q);
  sys.rhs = Eigen::VectorXd::Zero(q);
  Eigen::VectorXd z(q);
  const int lo = std::max(0, static_cast<int>(std::floor((t - b) * n)) - 2);
  const int hi = std::min(n - 1, static_cast<int>(std::ceil((t + b) * n)) + 1);
  for (int i = lo; i <= hi; ++i) {
    const double w = kernel_eval(K, (sample.time_of(i) - t) / b);
    if (w <= 0.0) continue;
    const double dt = sample.time_of(i) - t;
    z.head(p) = sample.X.row(i).transpose();
    z.tail(p) = sample.X.row(i).transpose() * dt;
    sys.A.selfadjointView<Eigen::Lower>().rankUpdate(z, w);
    sys.rhs += w * sample.y(i) * z;
    ++sys.support;
  }
  sys.A.triangularView<Eigen::Upper>() = sys.A.transpose();
  return sys;
}

Eigen::MatrixXd checked_inverse(const Eigen::MatrixXd& A) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  const double lmin = es.eigenvalues().minCoeff();
  const double lmax = es.eigenvalues().maxCoeff();
  if (!(lmin > 0.0) || lmax / lmin > kCondLimit)
    throw Error(ErrorKind::RankDeficient, "weighted mean design is near-singular");
  return es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

}  // namespace

MeanFitPoint local_linear_mean_fit(const RegressionSample& sample, double b, KernelId K,
                                   double t, int row) {
  const int p = sample.p();
  MeanSystem sys = assemble(sample, b, K, t);
  if (sys.support < 2)
    throw Error(ErrorKind::InsufficientSupport, "mean fit needs >= 2 in-window points");
  const Eigen::MatrixXd Ainv = checked_inverse(sys.A);
  const Eigen::VectorXd beta = Ainv * sys.rhs;

  MeanFitPoint out;
  out.beta0 = beta.head(p);
  out.beta1 = beta.tail(p);
  if (row >= 0) {
    const Eigen::VectorXd x = sample.X.row(row).transpose();
    out.fitted = x.dot(out.beta0);
    const double w_self = kernel_eval(K, (sample.time_of(row) - t) / b);
    out.hat_diag = w_self * x.dot(Ainv.topLeftCorner(p, p) * x);
  }
  return out;
}

GcvValue gcv_objective(const RegressionSample& sample, double b, KernelId K) {
  const int n = sample.n();
  GcvValue v;
  for (int i = 0; i < n; ++i) {
    const MeanFitPoint f = local_linear_mean_fit(sample, b, K, sample.time_of(i), i);
    const double r = sample.y(i) - f.fitted;
    v.rss += r * r;
    v.trace += f.hat_diag;
  }
  const double denom = 1.0 - v.trace / n;
  if (!(denom > 0.0))
    throw Error(ErrorKind::RankDeficient, "GCV denominator nonpositive (trace(D) >= n)");
  v.gcv = (v.rss / n) / (denom * denom);
  return v;
}

std::vector<double> mean_fitted_values(const RegressionSample& sample, double b, KernelId K) {
  const int n = sample.n();
  std::vector<double> fitted(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    fitted[static_cast<std::size_t>(i)] =
        local_linear_mean_fit(sample, b, K, sample.time_of(i), i).fitted;
  return fitted;
}

double gcv_select(const RegressionSample& sample, const std::vector<double>& candidates,
                  KernelId K) {
  if (candidates.empty())
    throw Error(ErrorKind::AllCandidatesInfeasible, "empty GCV candidate grid");
  double best_b = 0.0;
  double best_gcv = std::numeric_limits<double>::infinity();
  bool any = false;
  std::vector<double> sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  for (const double b : sorted) {
    try {
      const GcvValue v = gcv_objective(sample, b, K);
      if (v.gcv < best_gcv) {  // strict: ties stay with the smaller b
        best_gcv = v.gcv;
        best_b = b;
        any = true;
      }
    } catch (const Error&) {
      continue;  // infeasible candidate
    }
  }
  if (!any)
    throw Error(ErrorKind::AllCandidatesInfeasible, "no feasible GCV candidate");
  return best_b;
}

double correction_factor(const RegressionSample& sample, const LocalLinearFit& pilot_fit,
                         double tau, double b, int M, double w_n, KernelId K,
                         WarningLog& warnings) {
  const int n = sample.n();
  const int p = sample.p();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(p);

  // Numerator: quantile-path M_1(t) integrated over [0,1].
  const std::vector<double> grid = uniform_grid(0.0, 1.0, std::min(n, 200));
  const McEstimate mc =
      m_c_curve(sample, pilot_fit, tau, LrvTuning{b, w_n, M}, K, grid, ones, warnings);
  const double num = trapezoid(mc.m_c, 1.0 / (static_cast<double>(grid.size()) - 1.0));

  // Denominator: trace of Mtilde = Sigma~^{-1} Lambda~ Sigma~^{-1} on the mean
  // path, with the same window-sum construction driven by mean residuals.
  const std::vector<double> fitted = mean_fitted_values(sample, b, K);
  std::vector<double> resid(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    resid[static_cast<std::size_t>(i)] = sample.y(i) - fitted[static_cast<std::size_t>(i)];

  double t_lo = b + static_cast<double>(M + 1) / n;
  double t_hi = 1.0 - t_lo;
  if (t_lo > t_hi) t_lo = t_hi = 0.5;

  std::vector<double> tr(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double t = std::clamp(grid[j], t_lo, t_hi);
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(p, p);
    for (int i = 0; i < n; ++i) {
      const double kw = kernel_eval(K, (sample.time_of(i) - t) / b);
      if (kw <= 0.0) continue;
      S.selfadjointView<Eigen::Lower>().rankUpdate(sample.X.row(i).transpose(), kw);
    }
    for (int i = M + 1; i <= n - M; ++i) {
      const double kw = kernel_eval(K, (static_cast<double>(i) / n - t) / b);
      if (kw <= 0.0) continue;
      Eigen::VectorXd xi = Eigen::VectorXd::Zero(p);
      for (int k = i - M; k <= i + M; ++k)
        xi += resid[static_cast<std::size_t>(k - 1)] * sample.X.row(k - 1).transpose();
      L.selfadjointView<Eigen::Lower>().rankUpdate(xi, kw / (2.0 * M + 1.0));
    }
    S.triangularView<Eigen::Upper>() = S.transpose();
    L.triangularView<Eigen::Upper>() = L.transpose();
    S /= (n * b);
    L /= (n * b);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    const double lmin = es.eigenvalues().minCoeff();
    const double lmax = es.eigenvalues().maxCoeff();
    if (!(lmin > 0.0) || lmax / lmin > kCondLimit)
      throw Error(ErrorKind::SingularSigma, "Sigma~ near-singular in correction factor");
    const Eigen::MatrixXd Sinv = es.eigenvectors() *
                                 es.eigenvalues().cwiseInverse().asDiagonal() *
                                 es.eigenvectors().transpose();
    tr[j] = (Sinv * L * Sinv).trace();
  }
  const double den = trapezoid(tr, 1.0 / (static_cast<double>(grid.size()) - 1.0));

  if (!(den > 1e-12 * std::max(num, 1.0))) {
    warnings.add("correction factor denominator degenerate; C_s set to 1");
    return 1.0;
  }
  return std::pow(num / den, 0.2);
}

double min_volatility_w(const std::vector<double>& candidates,
                        const std::vector<McEstimate>& curves, int u) {
  const int k = static_cast<int>(candidates.size());
  if (static_cast<int>(curves.size()) != k)
    throw Error(ErrorKind::InvalidArgument, "candidate/curve count mismatch");
  if (k < u)
    throw Error(ErrorKind::TooFewCandidates,
                std::to_string(k) + " candidates for volatility window u=" + std::to_string(u));

  const std::size_t G = curves.front().grid.size();
  const double dx = 1.0 / (static_cast<double>(G) - 1.0);

  int best_l = 0;
  double best_ise = std::numeric_limits<double>::infinity();
  for (int l = 0; l + u <= k; ++l) {
    std::vector<double> var_t(G, 0.0);
    for (std::size_t j = 0; j < G; ++j) {
      double mean = 0.0;
      for (int v = l; v < l + u; ++v) mean += curves[static_cast<std::size_t>(v)].m_c[j];
      mean /= u;
      double ss = 0.0;
      for (int v = l; v < l + u; ++v) {
        const double d = curves[static_cast<std::size_t>(v)].m_c[j] - mean;
        ss += d * d;
      }
      var_t[j] = ss / (u - 1);
    }
    const double ise = trapezoid(var_t, dx);
    if (ise < best_ise) {  // strict: first minimizer wins ties
      best_ise = ise;
      best_l = l;
    }
  }
  return candidates[static_cast<std::size_t>(best_l + u / 2)];
}

std::vector<double> default_b_candidates() {
  std::vector<double> b;
  for (int i = 0; i <= 17; ++i) b.push_back(0.06 + 0.02 * i);
  return b;  // 0.06, 0.08, ..., 0.40
}

std::vector<double> default_w_factors() {
  std::vector<double> w;
  for (int i = 0; i <= 12; ++i) w.push_back(0.05 + 0.025 * i);
  return w;  // 0.05, 0.075, ..., 0.35
}

TuningSelection default_tuning(int n, TestMode mode) {
  if (n < 10) throw Error(ErrorKind::InvalidArgument, "default_tuning needs n >= 10");
  TuningSelection t;
  t.h = std::pow(static_cast<double>(n), -1.0 / 3.0);
  t.M_s = static_cast<int>(std::floor(std::cbrt(static_cast<double>(n)) + 1e-9));
  t.b_candidates = default_b_candidates();
  t.w_candidates = default_w_factors();
  (void)mode;  // the mode enters once b_mean and C_s are known
  return t;
}

}  // namespace qshift
