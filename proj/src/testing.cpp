#include "qshift/testing.hpp"

#include <numeric>

namespace qshift {

namespace {

constexpr int kSitNodes = 2000;
constexpr int kScbNodes = 1000;
constexpr double kFlatCurveFloor = 1e-6;

double stddev(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
  double ss = 0.0;
  for (const double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / xs.size());
}

// Density-bandwidth spread: sd capped by the normalized IQR so that fit
// misspecification in the tails does not widen the w grid.
double robust_spread(std::vector<double> xs) {
  const double sd = stddev(xs);
  const double iqr =
      empirical_quantile(xs, 0.75) - empirical_quantile(std::move(xs), 0.25);
  const double riqr = iqr / 1.349;
  return (riqr > 0.0) ? std::min(sd, riqr) : sd;
}

// Accumulates sum_i M_c(i/N) H'((m(i/N)-t)/h) Kbar_b(j/n - i/N) into W(t,j),
// then scales by 1/(n b N h^2).
void accumulate_weights(Eigen::MatrixXd& W, const std::vector<double>& m_r,
                        const std::vector<double>& mc_r, int n, double b, double h, int N,
                        KernelId K, KernelId H, const std::vector<double>& grid) {
  std::vector<std::pair<double, int>> order(m_r.size());  // (m(i/N), i)
  for (int i = 1; i <= N; ++i)
    order[static_cast<std::size_t>(i - 1)] = {m_r[static_cast<std::size_t>(i - 1)], i};
  std::sort(order.begin(), order.end());

  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double t = grid[k];
    auto lo = std::lower_bound(order.begin(), order.end(), std::make_pair(t - h, 0));
    auto hi = std::upper_bound(order.begin(), order.end(), std::make_pair(t + h, N + 1));
    for (auto it = lo; it != hi; ++it) {
      const double m_i = it->first;
      const int i = it->second;
      const double a =
          mc_r[static_cast<std::size_t>(i - 1)] * kernel_deriv(H, (m_i - t) / h);
      if (a == 0.0) continue;
      const double center = static_cast<double>(i) / N;
      const int jlo = std::max(1, static_cast<int>(std::ceil((center - b) * n)) - 1);
      const int jhi = std::min(n, static_cast<int>(std::floor((center + b) * n)) + 1);
      for (int j = jlo; j <= jhi; ++j) {
        const double kb = kbar_eval(K, (static_cast<double>(j) / n - center) / b);
        if (kb != 0.0) W(static_cast<Eigen::Index>(k), j - 1) += a * kb;
      }
    }
  }
  W *= 1.0 / (static_cast<double>(n) * b * static_cast<double>(N) * h * h);
}

// Draws the replicate multiplier vectors and evaluates Z1 - Z2 on the grid.
class ReplicateEngine {
 public:
  explicit ReplicateEngine(const BootstrapInputs& in) : in_(in) {
    if (in.dep) {
      n_v1_ = static_cast<int>(in.dep->W11.cols());
      n_v2_ = n_v1_;
    } else {
      n_v1_ = static_cast<int>(in.w1->W.cols());
      n_v2_ = static_cast<int>(in.w2->W.cols());
    }
  }

  Eigen::VectorXd z_diff(std::uint64_t seed, int replicate) const {
    Rng rng(substream_seed(seed, static_cast<std::uint64_t>(replicate) + 1));
    Eigen::VectorXd v1(n_v1_), v2(n_v2_);
    for (int j = 0; j < n_v1_; ++j) v1(j) = rng.normal();
    for (int j = 0; j < n_v2_; ++j) v2(j) = rng.normal();

    if (!in_.dep) {
      Eigen::VectorXd z = in_.w1->W * v1;
      z.noalias() -= in_.w2->W * v2;
      return z;
    }
    const auto& d = *in_.dep;
    const int n2 = static_cast<int>(d.W21.cols());
    Eigen::VectorXd g1(n2), g2(n2);
    for (int j = 0; j < n2; ++j) {
      g1(j) = v1(d.jmap[static_cast<std::size_t>(j)] - 1);
      g2(j) = v2(d.jmap[static_cast<std::size_t>(j)] - 1);
    }
    Eigen::VectorXd z = d.W11 * v1;
    z.noalias() -= d.W21 * g1;
    z.noalias() -= d.W12 * v2;
    z.noalias() += d.W22 * g2;
    return z;
  }

  const std::vector<double>& grid() const {
    return in_.dep ? in_.dep->grid : in_.w1->grid;
  }

 private:
  const BootstrapInputs& in_;
  int n_v1_ = 0, n_v2_ = 0;
};

int order_stat_index(int Q, double alpha) {
  return std::clamp(static_cast<int>(std::floor(Q * (1.0 - alpha))), 1, Q);
}

}  // namespace

WeightTable z_weights(const DebiasedFit& curve, const McEstimate& mc, double b, double h,
                      int N, KernelId K, KernelId H, const std::vector<double>& grid) {
  WeightTable wt;
  wt.grid = grid;
  wt.b = b;
  wt.h = h;
  wt.N = N;
  wt.m_riemann.resize(static_cast<std::size_t>(N));
  wt.mc_riemann.resize(static_cast<std::size_t>(N));
  for (int i = 1; i <= N; ++i) {
    const double t = static_cast<double>(i) / N;
    wt.m_riemann[static_cast<std::size_t>(i - 1)] = curve.m_at(t);
    wt.mc_riemann[static_cast<std::size_t>(i - 1)] = mc.at(t);
  }
  const int n = N;  // Riemann resolution matches the sample size by default
  wt.W = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(grid.size()), n);
  accumulate_weights(wt.W, wt.m_riemann, wt.mc_riemann, n, b, h, N, K, H, grid);
  return wt;
}

DependentWeights dependent_z_weights(const DebiasedFit& curve1, const DebiasedFit& curve2,
                                     const JointMcEstimate& mc, double b1, double b2,
                                     double h1, double h2, int N1, int N2, KernelId K,
                                     KernelId H, const std::vector<double>& grid) {
  if (N1 < N2) throw Error(ErrorKind::InvalidArgument, "dependent path requires n1 >= n2");
  DependentWeights dw;
  dw.grid = grid;

  std::vector<double> m1(static_cast<std::size_t>(N1)), m2(static_cast<std::size_t>(N2));
  std::vector<double> mc11(static_cast<std::size_t>(N1)), mc12a(static_cast<std::size_t>(N1));
  std::vector<double> mc12b(static_cast<std::size_t>(N2)), mc22(static_cast<std::size_t>(N2));
  for (int i = 1; i <= N1; ++i) {
    const double t = static_cast<double>(i) / N1;
    m1[static_cast<std::size_t>(i - 1)] = curve1.m_at(t);
    mc11[static_cast<std::size_t>(i - 1)] = mc.at11(t);
    mc12a[static_cast<std::size_t>(i - 1)] = mc.at12(t);
  }
  for (int i = 1; i <= N2; ++i) {
    const double t = static_cast<double>(i) / N2;
    m2[static_cast<std::size_t>(i - 1)] = curve2.m_at(t);
    mc12b[static_cast<std::size_t>(i - 1)] = mc.at12(t);
    mc22[static_cast<std::size_t>(i - 1)] = mc.at22(t);
  }

  const auto T = static_cast<Eigen::Index>(grid.size());
  dw.W11 = Eigen::MatrixXd::Zero(T, N1);
  dw.W12 = Eigen::MatrixXd::Zero(T, N1);
  dw.W21 = Eigen::MatrixXd::Zero(T, N2);
  dw.W22 = Eigen::MatrixXd::Zero(T, N2);
  accumulate_weights(dw.W11, m1, mc11, N1, b1, h1, N1, K, H, grid);
  accumulate_weights(dw.W12, m1, mc12a, N1, b1, h1, N1, K, H, grid);
  accumulate_weights(dw.W21, m2, mc12b, N2, b2, h2, N2, K, H, grid);
  accumulate_weights(dw.W22, m2, mc22, N2, b2, h2, N2, K, H, grid);

  dw.jmap.resize(static_cast<std::size_t>(N2));
  for (int j = 1; j <= N2; ++j)
    dw.jmap[static_cast<std::size_t>(j - 1)] =
        static_cast<int>((static_cast<long long>(N1) * j) / N2);
  return dw;
}

double sit_statistic(const GHat& g1, const GHat& g2, const ShiftEstimate& se) {
  if (!se.window_valid)
    throw Error(ErrorKind::EmptyWindow, "sit_statistic on degenerate window");
  const std::vector<double> grid =
      uniform_grid(se.window_lo, se.window_hi, kSitNodes - 1);
  std::vector<double> vals(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double d = g1.eval(grid[k]) - g2.eval(grid[k]);
    vals[k] = d * d;
  }
  return trapezoid(vals, se.window_length() / (kSitNodes - 1));
}

SitResult bootstrap_sit(const BootstrapInputs& in, const ShiftEstimate& se, double T,
                        int Q, const std::vector<double>& alphas, std::uint64_t seed) {
  if (!se.window_valid)
    throw Error(ErrorKind::EmptyWindow, "bootstrap_sit on degenerate window");
  if (Q < 2) throw Error(ErrorKind::InvalidArgument, "bootstrap needs Q >= 2");

  ReplicateEngine engine(in);
  const std::vector<double>& grid = engine.grid();
  const double dx = (grid.back() - grid.front()) / (static_cast<double>(grid.size()) - 1.0);

  SitResult res;
  res.T = T;
  res.d_hat = se.d_hat;
  res.window_lo = se.window_lo;
  res.window_hi = se.window_hi;
  res.boot.resize(static_cast<std::size_t>(Q));
  std::vector<double> vals(grid.size());
  for (int q = 0; q < Q; ++q) {
    const Eigen::VectorXd z = engine.z_diff(seed, q);
    for (std::size_t k = 0; k < grid.size(); ++k) vals[k] = z(static_cast<Eigen::Index>(k)) *
                                                            z(static_cast<Eigen::Index>(k));
    res.boot[static_cast<std::size_t>(q)] = trapezoid(vals, dx);
  }

  std::vector<double> sorted = res.boot;
  std::sort(sorted.begin(), sorted.end());
  res.p_value = p_value_from_replicates(res.boot, T);

  for (const double a : alphas) {
    bool rej = false;
    if (a >= 1.0) rej = true;
    else if (a > 0.0) rej = T > sorted[static_cast<std::size_t>(order_stat_index(Q, a) - 1)];
    res.reject_at[a] = rej;
  }
  return res;
}

double p_value_from_replicates(std::vector<double> replicates, double T) {
  std::sort(replicates.begin(), replicates.end());
  const auto q_star = static_cast<double>(
      std::upper_bound(replicates.begin(), replicates.end(), T) - replicates.begin());
  return 1.0 - q_star / static_cast<double>(replicates.size());
}

double k1_hat(double t, const K1Context& s1, const K1Context& s2,
              const KernelConstants& kc, WarningLog& warnings) {
  const double c_n2 = static_cast<double>(s2.n) / s1.n;
  const double c_b2 = s2.b / s1.b;

  const auto term = [&](const K1Context& s, double c_n, double c_b) {
    const double tinv = invert_monotone(*s.curve, t, warnings);
    const double mhat = s.mc_at(tinv);
    const double g = s.ghat->eval(t);
    // m'(m^{-1}(t)) enters squared in the denominator; the reciprocal of the
    // ghat plug-in estimates the same quantity without the noise of the
    // theta-derivative curves, so the term reduces to M^2 g^4.
    const double mp_inv = g;  // 1 / m'(m^{-1}(t))
    if (1.0 / std::max(std::abs(mp_inv), 1e-300) < kFlatCurveFloor)
      throw Error(ErrorKind::FlatCurve,
                  "m-hat derivative below threshold at inverse time " + std::to_string(tinv));
    return mhat * mhat * g * g * mp_inv * mp_inv / (c_n * c_b * c_b * c_b);
  };

  const double sum = term(s1, 1.0, 1.0) + term(s2, c_n2, c_b2);
  return sum * kc.int_kbar_prime_sq * kc.int_hprime_x * kc.int_hprime_x;
}

ScbResult bootstrap_scb(const BootstrapInputs& in, const ShiftEstimate& se,
                        const std::vector<double>& center, const std::vector<double>& k1,
                        const std::vector<double>& grid, int Q,
                        const std::vector<double>& alphas, double primary_alpha,
                        std::uint64_t seed) {
  if (!se.window_valid)
    throw Error(ErrorKind::EmptyWindow, "bootstrap_scb on degenerate window");
  if (Q < 2) throw Error(ErrorKind::InvalidArgument, "bootstrap needs Q >= 2");

  ReplicateEngine engine(in);
  std::vector<double> sqrt_k1(k1.size());
  for (std::size_t j = 0; j < k1.size(); ++j)
    sqrt_k1[j] = std::sqrt(std::max(k1[j], 1e-100));

  ScbResult res;
  res.grid = grid;
  res.center = center;
  res.k1 = k1;
  res.alpha = primary_alpha;
  res.d_hat = se.d_hat;
  res.window_lo = se.window_lo;
  res.window_hi = se.window_hi;
  res.boot.resize(static_cast<std::size_t>(Q));
  for (int q = 0; q < Q; ++q) {
    const Eigen::VectorXd z = engine.z_diff(seed, q);
    double sup = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k)
      sup = std::max(sup, std::abs(z(static_cast<Eigen::Index>(k))) / sqrt_k1[k]);
    res.boot[static_cast<std::size_t>(q)] = sup;
  }

  std::vector<double> sorted = res.boot;
  std::sort(sorted.begin(), sorted.end());
  const auto mult_for = [&](double a) {
    return sorted[static_cast<std::size_t>(order_stat_index(Q, a) - 1)];
  };
  res.multiplier = mult_for(primary_alpha);

  res.band_lo.resize(grid.size());
  res.band_hi.resize(grid.size());
  res.zero_inside = true;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    res.band_lo[k] = center[k] - res.multiplier * sqrt_k1[k];
    res.band_hi[k] = center[k] + res.multiplier * sqrt_k1[k];
    if (res.band_lo[k] > 0.0 || res.band_hi[k] < 0.0) res.zero_inside = false;
  }

  for (const double a : alphas) {
    if (a >= 1.0) {
      res.reject_at[a] = true;
      continue;
    }
    if (a <= 0.0) {
      res.reject_at[a] = false;
      continue;
    }
    const double m = mult_for(a);
    bool exits = false;
    for (std::size_t k = 0; k < grid.size() && !exits; ++k)
      exits = (center[k] - m * sqrt_k1[k] > 0.0) || (center[k] + m * sqrt_k1[k] < 0.0);
    res.reject_at[a] = exits;
  }
  return res;
}

double bootstrap_mean_identity(const BootstrapInputs& in) {
  const std::vector<double>& grid = in.dep ? in.dep->grid : in.w1->grid;
  const double dx = (grid.back() - grid.front()) / (static_cast<double>(grid.size()) - 1.0);
  std::vector<double> var(grid.size(), 0.0);

  if (!in.dep) {
    for (std::size_t k = 0; k < grid.size(); ++k)
      var[k] = in.w1->W.row(static_cast<Eigen::Index>(k)).squaredNorm() +
               in.w2->W.row(static_cast<Eigen::Index>(k)).squaredNorm();
  } else {
    const auto& d = *in.dep;
    const int n1 = static_cast<int>(d.W11.cols());
    const int n2 = static_cast<int>(d.W21.cols());
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      Eigen::VectorXd coef1 = d.W11.row(r).transpose();
      Eigen::VectorXd coef2 = -d.W12.row(r).transpose();
      for (int j = 0; j < n2; ++j) {
        const int jj = d.jmap[static_cast<std::size_t>(j)] - 1;
        coef1(jj) -= d.W21(r, j);
        coef2(jj) += d.W22(r, j);
      }
      (void)n1;
      var[k] = coef1.squaredNorm() + coef2.squaredNorm();
    }
  }
  return trapezoid(var, dx);
}

bool TestReport::rejected(double alpha) const {
  if (sit) {
    const auto it = sit->reject_at.find(alpha);
    if (it != sit->reject_at.end()) return it->second;
  }
  if (scb) {
    const auto it = scb->reject_at.find(alpha);
    if (it != scb->reject_at.end()) return it->second;
  }
  throw Error(ErrorKind::InvalidArgument, "alpha was not evaluated in this run");
}

// ---------------------------------------------------------------------------
// run_test
// ---------------------------------------------------------------------------

namespace {

struct SeriesPrep {
  TuningSelection tuning;
  LocalLinearFit fit_b;
  DebiasedFit curve;
  GHat ghat;
  McEstimate mc;
  std::vector<double> own_resid;
  int N = 0;
};

// Finite-sample calibration of the linearized Gaussian field: the real ghat
// pushes the m-hat noise through the kernel H, which saturates once the noise
// is comparable to h. A pilot set of multiplier fields is propagated through
// the exact functional and the weight rows are scaled to the measured
// dispersion ratio per node.
std::vector<double> saturation_damping(const std::vector<double>& var_lin,
                                       const std::vector<double>& m_riemann,
                                       const std::vector<double>& mc_riemann, int n,
                                       double b, double h, int N, KernelId K, KernelId H,
                                       const std::vector<double>& grid,
                                       std::uint64_t pilot_seed) {
  constexpr int kPilotDraws = 48;
  const std::size_t T = grid.size();

  // Bahadur field matrix: delta(i/N) = (M_c(i/N)/(n b)) sum_j Kbar_b(j/n - i/N) V_j.
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(N, n);
  for (int i = 1; i <= N; ++i) {
    const double u = static_cast<double>(i) / N;
    const int jlo = std::max(1, static_cast<int>(std::ceil((u - b) * n)) - 1);
    const int jhi = std::min(n, static_cast<int>(std::floor((u + b) * n)) + 1);
    for (int j = jlo; j <= jhi; ++j)
      B(i - 1, j - 1) = mc_riemann[static_cast<std::size_t>(i - 1)] *
                        kbar_eval(K, (static_cast<double>(j) / n - u) / b) / (n * b);
  }

  // sorted m-values for windowed sums
  std::vector<std::pair<double, int>> order(static_cast<std::size_t>(N));
  for (int i = 1; i <= N; ++i)
    order[static_cast<std::size_t>(i - 1)] = {m_riemann[static_cast<std::size_t>(i - 1)], i};
  std::sort(order.begin(), order.end());

  std::vector<double> sum(T, 0.0), ss(T, 0.0);
  Eigen::VectorXd v(n), delta(N);
  for (int r = 0; r < kPilotDraws; ++r) {
    Rng rng(substream_seed(pilot_seed, static_cast<std::uint64_t>(r) + 1));
    for (int j = 0; j < n; ++j) v(j) = rng.normal();
    delta.noalias() = B * v;
    const double dmax = delta.cwiseAbs().maxCoeff();
    for (std::size_t k = 0; k < T; ++k) {
      const double t = grid[k];
      auto lo = std::lower_bound(order.begin(), order.end(),
                                 std::make_pair(t - h - dmax, 0));
      auto hi = std::upper_bound(order.begin(), order.end(),
                                 std::make_pair(t + h + dmax, N + 1));
      double dg = 0.0;
      for (auto it = lo; it != hi; ++it) {
        const double m_i = it->first;
        const double d_i = delta(it->second - 1);
        dg += kernel_eval(H, (m_i + d_i - t) / h) - kernel_eval(H, (m_i - t) / h);
      }
      dg /= (static_cast<double>(N) * h);
      sum[k] += dg;
      ss[k] += dg * dg;
    }
  }

  std::vector<double> lambda(T, 1.0);
  for (std::size_t k = 0; k < T; ++k) {
    const double mean = sum[k] / kPilotDraws;
    const double var_sat = std::max(ss[k] / kPilotDraws - mean * mean, 0.0);
    if (var_lin[k] > 1e-300)
      lambda[k] = std::clamp(std::sqrt(var_sat / var_lin[k]), 0.05, 2.0);
  }
  return lambda;
}

void scale_rows(Eigen::MatrixXd& W, const std::vector<double>& lambda) {
  for (std::size_t k = 0; k < lambda.size(); ++k)
    W.row(static_cast<Eigen::Index>(k)) *= lambda[k];
}

SeriesPrep prepare_series(const RegressionSample& sample, const Eigen::VectorXd& c,
                          double tau, TestMode mode, std::optional<double> b_override,
                          std::optional<double> h_override, std::optional<double> w_override,
                          std::optional<int> M_override, const RunOverrides& cfg,
                          int series_tag, WarningLog& warnings, bool need_mc = true) {
  const int n = sample.n();
  const int p = sample.p();
  SeriesPrep prep;
  prep.tuning = default_tuning(n, mode);
  if (h_override) prep.tuning.h = *h_override;
  if (M_override) prep.tuning.M_s = *M_override;

  QuantileFitConfig qcfg;
  qcfg.tau = tau;
  qcfg.kernel = cfg.kernel_K;
  qcfg.grid_size = cfg.grid_G.value_or(n);
  qcfg.solver_tol = cfg.solver_tol;
  qcfg.solver_max_iter = cfg.solver_max_iter;

  // Lower clamp follows the n^{-1/5} rate of the sensitivity study (the
  // smallest rate compatible with condition (B3) at these sample sizes);
  // upper keeps windows inside half the design.
  const double b_floor =
      std::max({std::pow(static_cast<double>(n), -0.2), 0.03, 3.2 * p / n});
  const double b_ceil = 0.45;

  if (b_override) {
    prep.tuning.b_sit = prep.tuning.b_scb = prep.tuning.b_used = *b_override;
    prep.tuning.C_s = 1.0;
  } else {
    prep.tuning.b_mean = gcv_select(sample, prep.tuning.b_candidates, cfg.kernel_K);

    QuantileFitConfig pilot_cfg = qcfg;
    pilot_cfg.bandwidth = std::clamp(prep.tuning.b_mean, b_floor, b_ceil);
    const LocalLinearFit pilot = fit_curve_grid(sample, pilot_cfg);
    const std::vector<double> pilot_resid = own_time_residuals(sample, pilot);
    const double w_pilot = std::max(robust_spread(pilot_resid), 1e-8) *
                           std::pow(static_cast<double>(n), -0.2);
    prep.tuning.C_s = correction_factor(sample, pilot, tau, pilot_cfg.bandwidth,
                                        prep.tuning.M_s, w_pilot, cfg.kernel_K, warnings);

    prep.tuning.b_sit = 2.0 * prep.tuning.C_s * prep.tuning.b_mean *
                        sit_bandwidth_multiplier(n);
    prep.tuning.b_scb = 2.0 * prep.tuning.C_s * prep.tuning.b_mean;
    const double raw = (mode == TestMode::SIT) ? prep.tuning.b_sit : prep.tuning.b_scb;
    prep.tuning.b_used = std::clamp(raw, b_floor, b_ceil);
    if (prep.tuning.b_used != raw)
      warnings.add("series " + std::to_string(series_tag) +
                   ": selected bandwidth clamped to feasible range");
  }

  qcfg.bandwidth = prep.tuning.b_used;
  prep.curve = fit_debiased(sample, qcfg, c, &prep.fit_b);
  if (!prep.curve.monotone_flag)
    warnings.add("MonotonicityWarning: series " + std::to_string(series_tag) +
                 " m-hat not strictly monotone on the grid");

  prep.N = n;
  prep.ghat = GHat::build(prep.curve, prep.tuning.h, cfg.kernel_H, prep.N);
  prep.own_resid = own_time_residuals(sample, prep.fit_b);

  if (!need_mc) return prep;

  if (w_override) {
    prep.tuning.w_n = *w_override;
    prep.mc = m_c_curve(sample, prep.fit_b, tau,
                        LrvTuning{prep.tuning.b_used, prep.tuning.w_n, prep.tuning.M_s},
                        cfg.kernel_K, prep.fit_b.grid, c, warnings);
  } else {
    const double scale = std::max(robust_spread(prep.own_resid), 1e-8);
    std::vector<double> ws = prep.tuning.w_candidates;
    for (double& w : ws) w *= scale;
    const std::vector<McEstimate> curves =
        m_c_curves_for_w(sample, prep.fit_b, tau, prep.tuning.b_used, prep.tuning.M_s,
                         cfg.kernel_K, prep.fit_b.grid, c, ws, warnings);
    prep.tuning.w_n = min_volatility_w(ws, curves, 5);
    const auto it = std::find(ws.begin(), ws.end(), prep.tuning.w_n);
    prep.mc = curves[static_cast<std::size_t>(it - ws.begin())];
    prep.tuning.w_candidates = ws;
  }
  return prep;
}

}  // namespace

TestReport run_test(const RegressionSample& s1, const RegressionSample& s2,
                    const Eigen::VectorXd& c1, const Eigen::VectorXd& c2, double tau,
                    TestMode mode, Dependence dep, const RunOverrides& cfg,
                    std::uint64_t seed) {
  s1.validate();
  s2.validate();
  if (!(tau > 0.0 && tau < 1.0))
    throw Error(ErrorKind::InvalidArgument, "tau must lie in (0,1)");
  if (c1.size() != s1.p() || c2.size() != s2.p())
    throw Error(ErrorKind::InvalidArgument, "c vectors must match covariate dimensions");
  if (dep == Dependence::dependent && s1.n() < s2.n())
    throw Error(ErrorKind::InvalidArgument, "dependent mode requires n1 >= n2");

  TestReport rep;
  rep.mode = mode;
  rep.dependence = dep;
  rep.tau = tau;
  rep.seed = seed;
  rep.n1 = s1.n();
  rep.n2 = s2.n();
  rep.Q = cfg.Q;

  SeriesPrep p1 = prepare_series(s1, c1, tau, mode, cfg.b1, cfg.h1, cfg.w1, cfg.M1, cfg, 1,
                                 rep.warnings);
  SeriesPrep p2 = prepare_series(s2, c2, tau, mode, cfg.b2, cfg.h2, cfg.w2, cfg.M2, cfg, 2,
                                 rep.warnings);
  rep.tuning1 = p1.tuning;
  rep.tuning2 = p2.tuning;

  const bool adapt_eta = !cfg.eta.has_value();
  const double eta = cfg.eta.value_or(default_eta(s1.n(), s2.n()));
  rep.shift = estimate_shift_values(p1.curve, p2.curve, p1.ghat, p2.ghat, eta, rep.warnings,
                                    adapt_eta);
  if (!rep.shift.window_valid)
    throw Error(ErrorKind::EmptyWindow,
                "a_hat+eta >= b_hat-eta (a_hat=" + std::to_string(rep.shift.a_hat) +
                    ", b_hat=" + std::to_string(rep.shift.b_hat) + ")");

  std::vector<double> grid;
  if (mode == TestMode::SIT) {
    grid = uniform_grid(rep.shift.window_lo, rep.shift.window_hi, kSitNodes - 1);
  } else {
    // The sup statistic needs K1-hat bounded away from zero: keep nodes where
    // both ghat plug-ins rest on at least three Riemann values.
    const std::vector<double> cand =
        uniform_grid(rep.shift.window_lo, rep.shift.window_hi, kScbNodes - 1);
    for (const double t : cand)
      if (p1.ghat.support_count(t) >= 3 && p2.ghat.support_count(t) >= 3)
        grid.push_back(t);
    if (grid.size() < 10) {
      rep.warnings.add("SCB support filter left too few nodes; using full window");
      grid = cand;
    }
  }

  WeightTable w1, w2;
  DependentWeights dw;
  JointMcEstimate joint_mc;
  BootstrapInputs boot_in;
  if (dep == Dependence::independent) {
    w1 = z_weights(p1.curve, p1.mc, p1.tuning.b_used, p1.tuning.h, p1.N, cfg.kernel_K,
                   cfg.kernel_H, grid);
    w2 = z_weights(p2.curve, p2.mc, p2.tuning.b_used, p2.tuning.h, p2.N, cfg.kernel_K,
                   cfg.kernel_H, grid);
    for (int s = 0; s < 2; ++s) {
      WeightTable& wt = s == 0 ? w1 : w2;
      const SeriesPrep& pr = s == 0 ? p1 : p2;
      std::vector<double> var_lin(grid.size());
      for (std::size_t k = 0; k < grid.size(); ++k)
        var_lin[k] = wt.W.row(static_cast<Eigen::Index>(k)).squaredNorm();
      const std::vector<double> lam = saturation_damping(
          var_lin, wt.m_riemann, wt.mc_riemann, (s == 0 ? s1 : s2).n(), pr.tuning.b_used,
          pr.tuning.h, pr.N, cfg.kernel_K, cfg.kernel_H, grid,
          substream_seed(seed, 0xDA40 + static_cast<std::uint64_t>(s)));
      scale_rows(wt.W, lam);
    }
    boot_in.w1 = &w1;
    boot_in.w2 = &w2;
  } else {
    joint_mc = joint_m_c_curve(
        s1, s2, p1.fit_b, p2.fit_b, tau,
        LrvTuning{p1.tuning.b_used, p1.tuning.w_n, p1.tuning.M_s},
        LrvTuning{p2.tuning.b_used, p2.tuning.w_n, p2.tuning.M_s}, p2.tuning.M_s,
        cfg.kernel_K, p2.fit_b.grid, c1, c2, rep.warnings);
    dw = dependent_z_weights(p1.curve, p2.curve, joint_mc, p1.tuning.b_used,
                             p2.tuning.b_used, p1.tuning.h, p2.tuning.h, p1.N, p2.N,
                             cfg.kernel_K, cfg.kernel_H, grid);
    // Damping per series geometry; the two streams' contributions to each
    // series enter through M11/M12 (resp. M12/M22), so the pilot field uses
    // their root-sum-of-squares amplitude.
    for (int s = 0; s < 2; ++s) {
      const SeriesPrep& pr = s == 0 ? p1 : p2;
      const int n_s = (s == 0 ? s1 : s2).n();
      Eigen::MatrixXd& Wa = s == 0 ? dw.W11 : dw.W21;
      Eigen::MatrixXd& Wb = s == 0 ? dw.W12 : dw.W22;
      std::vector<double> var_lin(grid.size());
      for (std::size_t k = 0; k < grid.size(); ++k)
        var_lin[k] = Wa.row(static_cast<Eigen::Index>(k)).squaredNorm() +
                     Wb.row(static_cast<Eigen::Index>(k)).squaredNorm();
      std::vector<double> m_r(static_cast<std::size_t>(pr.N)),
          mc_r(static_cast<std::size_t>(pr.N));
      for (int i = 1; i <= pr.N; ++i) {
        const double u = static_cast<double>(i) / pr.N;
        m_r[static_cast<std::size_t>(i - 1)] = pr.curve.m_at(u);
        const double a = s == 0 ? joint_mc.at11(u) : joint_mc.at22(u);
        const double c = joint_mc.at12(u);
        mc_r[static_cast<std::size_t>(i - 1)] = std::sqrt(a * a + c * c);
      }
      const std::vector<double> lam = saturation_damping(
          var_lin, m_r, mc_r, n_s, pr.tuning.b_used, pr.tuning.h, pr.N, cfg.kernel_K,
          cfg.kernel_H, grid, substream_seed(seed, 0xDA40 + static_cast<std::uint64_t>(s)));
      scale_rows(Wa, lam);
      scale_rows(Wb, lam);
    }
    boot_in.dep = &dw;
  }

  if (mode == TestMode::SIT) {
    const double T = sit_statistic(p1.ghat, p2.ghat, rep.shift);
    rep.sit = bootstrap_sit(boot_in, rep.shift, T, cfg.Q, cfg.alphas, seed);
  } else {
    K1Context k1c1{&p1.curve, &p1.ghat, {}, p1.tuning.b_used, p1.tuning.h, s1.n()};
    K1Context k1c2{&p2.curve, &p2.ghat, {}, p2.tuning.b_used, p2.tuning.h, s2.n()};
    if (dep == Dependence::independent) {
      k1c1.mc_at = [&](double t) { return p1.mc.at(t); };
      k1c2.mc_at = [&](double t) { return p2.mc.at(t); };
    } else {
      k1c1.mc_at = [&](double t) { return joint_mc.at11(t); };
      k1c2.mc_at = [&](double t) { return joint_mc.at22(t); };
    }
    const KernelConstants kc = KernelConstants::compute(cfg.kernel_K, cfg.kernel_H);
    std::vector<double> k1(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k)
      k1[k] = k1_hat(grid[k], k1c1, k1c2, kc, rep.warnings);

    // Where the ghat plug-ins sit on kernel tails, K1-hat collapses while the
    // bootstrap field does not, and the studentized sup degenerates. Trim
    // nodes whose bootstrap-variance-to-K1 ratio leaves the bulk.
    std::vector<double> ratio(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
      double var_z;
      if (boot_in.dep) {
        const auto& d = *boot_in.dep;
        const auto r = static_cast<Eigen::Index>(k);
        Eigen::VectorXd coef1 = d.W11.row(r).transpose();
        Eigen::VectorXd coef2 = -d.W12.row(r).transpose();
        for (int j = 0; j < static_cast<int>(d.W21.cols()); ++j) {
          const int jj = d.jmap[static_cast<std::size_t>(j)] - 1;
          coef1(jj) -= d.W21(r, j);
          coef2(jj) += d.W22(r, j);
        }
        var_z = coef1.squaredNorm() + coef2.squaredNorm();
      } else {
        var_z = boot_in.w1->W.row(static_cast<Eigen::Index>(k)).squaredNorm() +
                boot_in.w2->W.row(static_cast<Eigen::Index>(k)).squaredNorm();
      }
      ratio[k] = var_z / std::max(k1[k], 1e-300);
    }
    std::vector<double> sorted_ratio = ratio;
    std::sort(sorted_ratio.begin(), sorted_ratio.end());
    const double cutoff = 4.0 * sorted_ratio[sorted_ratio.size() / 2];
    std::vector<std::size_t> keep;
    for (std::size_t k = 0; k < grid.size(); ++k)
      if (ratio[k] <= cutoff) keep.push_back(k);
    if (keep.size() < 10) {
      rep.warnings.add("SCB variance-consistency filter left too few nodes; keeping all");
      keep.resize(grid.size());
      for (std::size_t k = 0; k < grid.size(); ++k) keep[k] = k;
    }

    std::vector<double> fgrid(keep.size()), fk1(keep.size()), center(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      fgrid[i] = grid[keep[i]];
      fk1[i] = k1[keep[i]];
      center[i] = p1.ghat.eval(fgrid[i]) - p2.ghat.eval(fgrid[i]);
    }
    const auto subset_rows = [&](const Eigen::MatrixXd& W) {
      Eigen::MatrixXd out(static_cast<Eigen::Index>(keep.size()), W.cols());
      for (std::size_t i = 0; i < keep.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = W.row(static_cast<Eigen::Index>(keep[i]));
      return out;
    };
    WeightTable fw1, fw2;
    DependentWeights fdw;
    BootstrapInputs fin;
    if (boot_in.dep) {
      fdw.grid = fgrid;
      fdw.W11 = subset_rows(dw.W11);
      fdw.W12 = subset_rows(dw.W12);
      fdw.W21 = subset_rows(dw.W21);
      fdw.W22 = subset_rows(dw.W22);
      fdw.jmap = dw.jmap;
      fin.dep = &fdw;
    } else {
      fw1 = w1;
      fw2 = w2;
      fw1.grid = fgrid;
      fw2.grid = fgrid;
      fw1.W = subset_rows(w1.W);
      fw2.W = subset_rows(w2.W);
      fin.w1 = &fw1;
      fin.w2 = &fw2;
    }

    rep.scb = bootstrap_scb(fin, rep.shift, center, fk1, fgrid, cfg.Q, cfg.alphas,
                            cfg.primary_alpha, seed);
  }
  return rep;
}

ShiftEstimate run_shift_only(const RegressionSample& s1, const RegressionSample& s2,
                             const Eigen::VectorXd& c1, const Eigen::VectorXd& c2,
                             double tau, TestMode mode, const RunOverrides& cfg,
                             WarningLog& warnings, DebiasedFit* curve1_out,
                             DebiasedFit* curve2_out, GHat* g1_out, GHat* g2_out) {
  s1.validate();
  s2.validate();
  SeriesPrep p1 = prepare_series(s1, c1, tau, mode, cfg.b1, cfg.h1, cfg.w1, cfg.M1, cfg, 1,
                                 warnings, /*need_mc=*/false);
  SeriesPrep p2 = prepare_series(s2, c2, tau, mode, cfg.b2, cfg.h2, cfg.w2, cfg.M2, cfg, 2,
                                 warnings, /*need_mc=*/false);
  const bool adapt_eta = !cfg.eta.has_value();
  const double eta = cfg.eta.value_or(default_eta(s1.n(), s2.n()));
  const ShiftEstimate se = estimate_shift_values(p1.curve, p2.curve, p1.ghat, p2.ghat, eta,
                                                 warnings, adapt_eta);
  if (curve1_out) *curve1_out = p1.curve;
  if (curve2_out) *curve2_out = p2.curve;
  if (g1_out) *g1_out = p1.ghat;
  if (g2_out) *g2_out = p2.ghat;
  return se;
}

}  // namespace qshift
