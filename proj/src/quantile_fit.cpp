#include "qshift/quantile_fit.hpp"

#include <Eigen/Eigenvalues>

#include <sstream>

namespace qshift {

namespace {

constexpr double kCondLimit = 1e10;
constexpr double kSqrt2 = 1.4142135623730950488;

struct Window {
  std::vector<int> idx;        // 0-based sample rows with positive weight
  std::vector<double> w;       // kernel weights
  Eigen::MatrixXd Z;           // m x 2p stacked regressors [x, x*(t_i - t)]
  Eigen::VectorXd yw;          // responses
};

Window gather_window(const RegressionSample& sample, const QuantileFitConfig& cfg, double t) {
  const int n = sample.n();
  const int p = sample.p();
  const double b = cfg.bandwidth;

  Window win;
  const int lo = std::max(0, static_cast<int>(std::floor((t - b) * n)) - 2);
  const int hi = std::min(n - 1, static_cast<int>(std::ceil((t + b) * n)) + 1);
  for (int i = lo; i <= hi; ++i) {
    const double u = (sample.time_of(i) - t) / b;
    const double w = kernel_eval(cfg.kernel, u);
    if (w > 0.0) {
      win.idx.push_back(i);
      win.w.push_back(w);
    }
  }
  const int m = static_cast<int>(win.idx.size());
  win.Z.resize(m, 2 * p);
  win.yw.resize(m);
  for (int r = 0; r < m; ++r) {
    const int i = win.idx[static_cast<std::size_t>(r)];
    const double dt = sample.time_of(i) - t;
    win.Z.row(r).head(p) = sample.X.row(i);
    win.Z.row(r).tail(p) = sample.X.row(i) * dt;
    win.yw(r) = sample.y(i);
  }
  return win;
}

double objective(const Window& win, double tau, const Eigen::VectorXd& beta) {
  double s = 0.0;
  for (int r = 0; r < win.Z.rows(); ++r)
    s += win.w[static_cast<std::size_t>(r)] * check_loss(tau, win.yw(r) - win.Z.row(r).dot(beta));
  return s;
}

// Enumerates q-subsets of {0..k-1}, calling fn on each.
template <typename Fn>
void for_each_subset(int k, int q, Fn&& fn) {
  std::vector<int> comb(static_cast<std::size_t>(q));
  for (int i = 0; i < q; ++i) comb[static_cast<std::size_t>(i)] = i;
  while (true) {
    fn(comb);
    int j = q - 1;
    while (j >= 0 && comb[static_cast<std::size_t>(j)] == k - q + j) --j;
    if (j < 0) break;
    ++comb[static_cast<std::size_t>(j)];
    for (int l = j + 1; l < q; ++l)
      comb[static_cast<std::size_t>(l)] = comb[static_cast<std::size_t>(l - 1)] + 1;
  }
}

}  // namespace

LocalFitResult local_quantile_fit(const RegressionSample& sample,
                                  const QuantileFitConfig& cfg, double t) {
  const int p = sample.p();
  const int q = 2 * p;
  const double tau = cfg.tau;

  Window win = gather_window(sample, cfg, t);
  const int m = static_cast<int>(win.idx.size());
  if (m < q)
    throw Error(ErrorKind::InsufficientSupport,
                "only " + std::to_string(m) + " in-window points, need " + std::to_string(q));

  // Weighted design and rank check.
  Eigen::MatrixXd A0 = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd rhs0 = Eigen::VectorXd::Zero(q);
  for (int r = 0; r < m; ++r) {
    const double w = win.w[static_cast<std::size_t>(r)];
    A0.selfadjointView<Eigen::Lower>().rankUpdate(win.Z.row(r).transpose(), w);
    rhs0 += w * win.yw(r) * win.Z.row(r).transpose();
  }
  A0.triangularView<Eigen::Upper>() = A0.transpose();
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A0);
    const double lmin = es.eigenvalues().minCoeff();
    const double lmax = es.eigenvalues().maxCoeff();
    if (!(lmin > 0.0) || lmax / lmin > kCondLimit)
      throw Error(ErrorKind::RankDeficient, "weighted design matrix is near-singular");
  }

  Eigen::VectorXd beta = A0.ldlt().solve(rhs0);

  // Response scale for the smoothing anneal (translation invariant).
  double wsum = 0.0, mean = 0.0;
  for (int r = 0; r < m; ++r) {
    wsum += win.w[static_cast<std::size_t>(r)];
    mean += win.w[static_cast<std::size_t>(r)] * win.yw(r);
  }
  mean /= wsum;
  double var = 0.0;
  for (int r = 0; r < m; ++r) {
    const double d = win.yw(r) - mean;
    var += win.w[static_cast<std::size_t>(r)] * d * d;
  }
  const double scale = std::max(std::sqrt(var / wsum), 1e-12 * (1.0 + std::abs(mean)));

  Eigen::VectorXd best = beta;
  double best_obj = objective(win, tau, beta);

  const double shift = tau - 0.5;
  const int stage_cap = std::max(10, cfg.solver_max_iter / 3);
  int iters = 0;
  double last_step = std::numeric_limits<double>::infinity();

  Eigen::MatrixXd A(q, q);
  Eigen::VectorXd rhs(q);
  for (const double eps_rel : {1e-2, 1e-4, 1e-6}) {
    const double eps = eps_rel * scale;
    for (int it = 0; it < stage_cap && iters < cfg.solver_max_iter; ++it, ++iters) {
      A.setZero();
      rhs.setZero();
      for (int r = 0; r < m; ++r) {
        const double w = win.w[static_cast<std::size_t>(r)];
        const double res = win.yw(r) - win.Z.row(r).dot(beta);
        const double s = std::sqrt(res * res + eps * eps);
        const double c = w / (2.0 * s);
        A.selfadjointView<Eigen::Lower>().rankUpdate(win.Z.row(r).transpose(), c);
        rhs += (c * win.yw(r) + w * shift) * win.Z.row(r).transpose();
      }
      A.triangularView<Eigen::Upper>() = A.transpose();
      A.diagonal().array() += 1e-13 * A.trace() / q;
      const Eigen::VectorXd next = A.ldlt().solve(rhs);
      last_step = (next - beta).lpNorm<Eigen::Infinity>();
      beta = next;
      const double obj = objective(win, tau, beta);
      if (obj < best_obj) {
        best_obj = obj;
        best = beta;
      }
      if (last_step <= cfg.solver_tol * (1.0 + beta.lpNorm<Eigen::Infinity>())) break;
    }
  }

  // Vertex polish: the exact minimizer interpolates 2p observations; try the
  // candidates with the smallest current residuals.
  {
    std::vector<int> order(static_cast<std::size_t>(m));
    for (int r = 0; r < m; ++r) order[static_cast<std::size_t>(r)] = r;
    std::vector<double> absres(static_cast<std::size_t>(m));
    for (int r = 0; r < m; ++r)
      absres[static_cast<std::size_t>(r)] = std::abs(win.yw(r) - win.Z.row(r).dot(best));
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return absres[static_cast<std::size_t>(a)] <
                                         absres[static_cast<std::size_t>(b)]; });
    const int k = std::min(m, q + 3);
    Eigen::MatrixXd Zs(q, q);
    Eigen::VectorXd ys(q);
    for_each_subset(k, q, [&](const std::vector<int>& comb) {
      for (int r = 0; r < q; ++r) {
        const int row = order[static_cast<std::size_t>(comb[static_cast<std::size_t>(r)])];
        Zs.row(r) = win.Z.row(row);
        ys(r) = win.yw(row);
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(Zs);
      if (!lu.isInvertible()) return;
      const Eigen::VectorXd cand = lu.solve(ys);
      if (!cand.allFinite()) return;
      // Ties go to the smoothed-solver limit: near-degenerate one-sided
      // windows have almost-flat directions where a vertex wins by rounding
      // error yet extrapolates wildly.
      const double obj = objective(win, tau, cand);
      if (obj < best_obj - 1e-8 * (1.0 + std::abs(best_obj))) {
        best_obj = obj;
        best = cand;
      }
    });
  }

  if (iters >= cfg.solver_max_iter &&
      last_step > 1e3 * cfg.solver_tol * (1.0 + best.lpNorm<Eigen::Infinity>())) {
    std::ostringstream os;
    os << "iteration cap " << cfg.solver_max_iter << " hit at t=" << t
       << "; last step " << last_step << ", objective " << best_obj;
    throw Error(ErrorKind::NoConvergence, os.str());
  }

  LocalFitResult out;
  out.beta0 = best.head(p);
  out.beta1 = best.tail(p);
  out.objective = best_obj;
  out.iterations = iters;
  return out;
}

LocalLinearFit fit_curve_grid(const RegressionSample& sample, const QuantileFitConfig& cfg) {
  sample.validate();
  cfg.validate(sample.n(), sample.p());
  const int G = cfg.grid_size > 0 ? cfg.grid_size : sample.n();
  const int p = sample.p();

  LocalLinearFit fit;
  fit.grid = uniform_grid(0.0, 1.0, G);
  fit.theta0.resize(G + 1, p);
  fit.theta1.resize(G + 1, p);
  fit.bandwidth = cfg.bandwidth;

  for (int j = 0; j <= G; ++j) {
    const double t = fit.grid[static_cast<std::size_t>(j)];
    try {
      const LocalFitResult r = local_quantile_fit(sample, cfg, t);
      fit.theta0.row(j) = r.beta0.transpose();
      fit.theta1.row(j) = r.beta1.transpose();
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + " [grid t=" + std::to_string(t) + "]");
    }
  }
  return fit;
}

DebiasedFit debias(const LocalLinearFit& fit_b, const LocalLinearFit& fit_b_sqrt2,
                   const Eigen::VectorXd& c) {
  if (fit_b.grid != fit_b_sqrt2.grid || fit_b.theta0.cols() != fit_b_sqrt2.theta0.cols())
    throw Error(ErrorKind::GridMismatch, "debias inputs disagree on grid or p");
  if (c.size() != fit_b.theta0.cols())
    throw Error(ErrorKind::GridMismatch, "c length does not match p");

  DebiasedFit out;
  out.grid = fit_b.grid;
  out.theta_tilde = 2.0 * fit_b_sqrt2.theta0 - fit_b.theta0;
  out.theta_tilde_prime = 2.0 * fit_b_sqrt2.theta1 - fit_b.theta1;
  out.c = c;

  const Eigen::VectorXd m = out.theta_tilde * c;
  const Eigen::VectorXd mp = out.theta_tilde_prime * c;
  out.m_hat.assign(m.data(), m.data() + m.size());
  out.m_hat_prime.assign(mp.data(), mp.data() + mp.size());

  bool inc = true, dec = true;
  for (std::size_t j = 1; j < out.m_hat.size(); ++j) {
    const double d = out.m_hat[j] - out.m_hat[j - 1];
    inc = inc && d > 0.0;
    dec = dec && d < 0.0;
  }
  out.monotone_flag = inc || dec;
  return out;
}

DebiasedFit fit_debiased(const RegressionSample& sample, const QuantileFitConfig& cfg,
                         const Eigen::VectorXd& c, LocalLinearFit* fit_b_out) {
  const LocalLinearFit fb = fit_curve_grid(sample, cfg);
  QuantileFitConfig half = cfg;
  half.bandwidth = cfg.bandwidth / kSqrt2;
  const LocalLinearFit fh = fit_curve_grid(sample, half);
  if (fit_b_out) *fit_b_out = fb;
  return debias(fb, fh, c);
}

}  // namespace qshift
