#include "qshift/inverse_shift.hpp"

namespace qshift {

namespace {
constexpr int kValueGridNodes = 2000;  // resolution for value-axis integrals
}

GHat GHat::build(const DebiasedFit& curve, double h, KernelId H, int N) {
  if (!(h > 0.0)) throw Error(ErrorKind::InvalidArgument, "ghat requires h > 0");
  if (N < 10) throw Error(ErrorKind::InvalidArgument, "ghat requires N >= 10");

  GHat g;
  g.h_ = h;
  g.N_ = N;
  g.H_ = H;
  g.m0_ = curve.m_hat.front();
  g.m_vals_.resize(static_cast<std::size_t>(N));
  for (int i = 1; i <= N; ++i)
    g.m_vals_[static_cast<std::size_t>(i - 1)] = curve.m_at(static_cast<double>(i) / N);
  g.sorted_ = g.m_vals_;
  std::sort(g.sorted_.begin(), g.sorted_.end());

  const double lo = std::min(g.m0_, g.sorted_.front() - h);
  const double hi = std::max(g.m0_, g.sorted_.back() + h);
  g.cum_grid_ = uniform_grid(lo, hi, kValueGridNodes);
  g.cum_.resize(g.cum_grid_.size());
  g.cum_[0] = 0.0;
  double prev = g.eval(g.cum_grid_[0]);
  const double dx = (hi - lo) / kValueGridNodes;
  for (std::size_t j = 1; j < g.cum_grid_.size(); ++j) {
    const double cur = g.eval(g.cum_grid_[j]);
    g.cum_[j] = g.cum_[j - 1] + 0.5 * (prev + cur) * dx;
    prev = cur;
  }
  g.cum_at_m0_ = interp_linear(g.cum_grid_, g.cum_, g.m0_);
  return g;
}

double GHat::eval(double t) const {
  // H has support [-1,1]; only m-values within h of t contribute.
  const auto lo = std::lower_bound(sorted_.begin(), sorted_.end(), t - h_);
  const auto hi = std::upper_bound(sorted_.begin(), sorted_.end(), t + h_);
  double s = 0.0;
  for (auto it = lo; it != hi; ++it) s += kernel_eval(H_, (*it - t) / h_);
  return s / (static_cast<double>(N_) * h_);
}

double GHat::G_of(double t) const {
  return interp_linear(cum_grid_, cum_, t) - cum_at_m0_;
}

double ghat_eval(const DebiasedFit& curve, double h, KernelId H, int N, double t) {
  if (!(h > 0.0)) throw Error(ErrorKind::InvalidArgument, "ghat requires h > 0");
  if (N < 10) throw Error(ErrorKind::InvalidArgument, "ghat requires N >= 10");
  double s = 0.0;
  for (int i = 1; i <= N; ++i)
    s += kernel_eval(H, (curve.m_at(static_cast<double>(i) / N) - t) / h);
  return s / (static_cast<double>(N) * h);
}

double invert_monotone(const DebiasedFit& curve, double u, WarningLog& warnings) {
  const auto& m = curve.m_hat;
  const auto& grid = curve.grid;
  if (!curve.monotone_flag)
    warnings.add("MonotonicityWarning: pseudo-inverse of non-monotone curve");

  const std::size_t G = m.size();
  std::size_t j = G;  // first grid index with m >= u
  for (std::size_t k = 0; k < G; ++k) {
    if (m[k] >= u) {
      j = k;
      break;
    }
  }
  if (j == G) {
    warnings.add("OutOfRange: inverse query above curve range, clamped to 1");
    ++warnings.range_clamp_count;
    return grid.back();
  }
  if (j == 0) {
    const double mmin = *std::min_element(m.begin(), m.end());
    if (u < mmin) {
      warnings.add("OutOfRange: inverse query below curve range, clamped to 0");
      ++warnings.range_clamp_count;
    }
    return grid.front();
  }
  const double m0 = m[j - 1], m1 = m[j];
  const double w = (m1 != m0) ? (u - m0) / (m1 - m0) : 0.0;
  return grid[j - 1] + w * (grid[j] - grid[j - 1]);
}

ShiftEstimate estimate_shift_values(const DebiasedFit& curve1, const DebiasedFit& curve2,
                                    const GHat& g1, const GHat& g2, double eta,
                                    WarningLog& warnings, bool adapt_eta) {
  if (!(eta > 0.0)) throw Error(ErrorKind::InvalidArgument, "eta must be positive");

  ShiftEstimate se;
  se.eta = eta;
  se.a_hat = curve1.m_hat.front();
  // d_tilde = m2^{-1}(m1(0)) realized through the antiderivative plug-in
  // G2 = int g2: unlike grid inversion it degrades smoothly when m1(0)
  // leaves the range of m2, which keeps the d-hat ratio well defined.
  se.d_tilde = std::clamp(g2.G_of(se.a_hat), -1.0, 1.0);

  // The ratio averages G2 - G1 over the estimated overlap. Under the null the
  // integrand is constant (= d) on [m1(0), m1(1-d)] and G2 saturates beyond,
  // so averaging to m1(1) changes nothing asymptotically; under alternatives
  // it keeps the ratio defined when m2^{-1}(m1(0)) degenerates toward 1.
  const double m1_end = curve1.m_hat.back();
  const double den = m1_end - se.a_hat;
  if (std::abs(den) < 1e-12 * (1.0 + std::abs(se.a_hat))) {
    warnings.add("degenerate d-hat denominator; falling back to d_tilde");
    se.d_hat = se.d_tilde;
  } else {
    // Oriented trapezoid of (G2 - G1) from a_hat = m1(0) to m1(1).
    const std::vector<double> vg = uniform_grid(se.a_hat, m1_end, kValueGridNodes);
    std::vector<double> diff(vg.size());
    for (std::size_t j = 0; j < vg.size(); ++j) diff[j] = g2.G_of(vg[j]) - g1.G_of(vg[j]);
    const double num = trapezoid(diff, (m1_end - se.a_hat) / kValueGridNodes);
    se.d_hat = num / den;
  }
  if (se.d_hat < -1.0 || se.d_hat > 1.0) {
    warnings.add("d_hat outside [-1,1], clamped");
    se.d_hat = std::clamp(se.d_hat, -1.0, 1.0);
  }

  const double t_end = 1.0 - se.d_hat;
  if (t_end < 0.0 || t_end > 1.0)
    warnings.add("1 - d_hat outside [0,1]; b_hat evaluated at clamped time");
  se.b_hat = curve1.m_at(std::clamp(t_end, 0.0, 1.0));

  if (adapt_eta && se.b_hat > se.a_hat && 0.2 * (se.b_hat - se.a_hat) < eta) {
    eta = 0.2 * (se.b_hat - se.a_hat);
    warnings.add("eta shrunk to a fifth of the estimated span");
    se.eta = eta;
  }

  se.window_lo = se.a_hat + eta;
  se.window_hi = se.b_hat - eta;
  se.window_valid = se.window_lo < se.window_hi;
  if (!se.window_valid) warnings.add("EmptyWindow: a_hat+eta >= b_hat-eta");
  return se;
}

ShiftEstimate estimate_shift(const DebiasedFit& curve1, const DebiasedFit& curve2,
                             const GHat& g1, const GHat& g2, double eta,
                             WarningLog& warnings) {
  ShiftEstimate se = estimate_shift_values(curve1, curve2, g1, g2, eta, warnings);
  if (!se.window_valid) {
    std::ostringstream msg;
    msg << "a_hat+eta (" << se.window_lo << ") >= b_hat-eta (" << se.window_hi
        << "); d_hat=" << se.d_hat;
    throw Error(ErrorKind::EmptyWindow, msg.str());
  }
  return se;
}

double weight_window(const ShiftEstimate& se, double t) {
  if (!se.window_valid)
    throw Error(ErrorKind::EmptyWindow, "weight_window on degenerate window");
  return (t >= se.window_lo && t <= se.window_hi) ? 1.0 : 0.0;
}

}  // namespace qshift
