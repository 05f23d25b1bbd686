#pragma once

#include "qshift/quantile_fit.hpp"

namespace qshift {

// Smoothed estimate of (m^{-1})'(t): ghat(t) = (1/(N h)) sum_i H((m(i/N)-t)/h),
// with its antiderivative G(t) = int_{m(0)}^t ghat(u) du.
class GHat {
 public:
  static GHat build(const DebiasedFit& curve, double h, KernelId H, int N);

  double eval(double t) const;
  double G_of(double t) const;

  double h() const { return h_; }
  int N() const { return N_; }
  double m0() const { return m0_; }
  // Number of Riemann m-values within h of t (value-axis support density).
  int support_count(double t) const {
    return static_cast<int>(std::upper_bound(sorted_.begin(), sorted_.end(), t + h_) -
                            std::lower_bound(sorted_.begin(), sorted_.end(), t - h_));
  }
  // m-curve values on the Riemann grid i/N, i = 1..N.
  const std::vector<double>& riemann_values() const { return m_vals_; }
  double support_lo() const { return sorted_.front() - h_; }
  double support_hi() const { return sorted_.back() + h_; }

 private:
  double h_ = 0.0;
  int N_ = 0;
  KernelId H_ = KernelId::epanechnikov;
  double m0_ = 0.0;
  std::vector<double> m_vals_;   // m(i/N), i=1..N
  std::vector<double> sorted_;   // ascending copy for windowed sums
  std::vector<double> cum_grid_; // value grid for the antiderivative
  std::vector<double> cum_;      // cumulative trapezoid of eval over cum_grid_
  double cum_at_m0_ = 0.0;
};

// Direct evaluation of the ghat display (reference path; GHat::eval agrees).
double ghat_eval(const DebiasedFit& curve, double h, KernelId H, int N, double t);

// inf{ t in grid : m(t) >= u }, linearly interpolated between bracketing grid
// points; mirrored for decreasing curves. Clamps to 0/1 with a range warning
// when u leaves the curve range; non-monotone curves get a pseudo-inverse and
// a MonotonicityWarning.
double invert_monotone(const DebiasedFit& curve, double u, WarningLog& warnings);

struct ShiftEstimate {
  double d_tilde = 0.0;
  double d_hat = 0.0;
  double a_hat = 0.0;
  double b_hat = 0.0;
  double eta = 0.0;
  double window_lo = 0.0;  // a_hat + eta
  double window_hi = 0.0;  // b_hat - eta
  bool window_valid = false;

  double window_length() const { return window_hi - window_lo; }
};

inline double default_eta(int n1, int n2) {
  return 1.0 / std::log(static_cast<double>(n1 + n2));
}

// Computes d_tilde, d_hat, a_hat, b_hat and the eta-trimmed window without
// raising on degeneracy (window_valid records it). With adapt_eta the trim is
// capped at a fifth of the estimated span so that small-range curves keep a
// usable window; the applied value lands in the eta field.
ShiftEstimate estimate_shift_values(const DebiasedFit& curve1, const DebiasedFit& curve2,
                                    const GHat& g1, const GHat& g2, double eta,
                                    WarningLog& warnings, bool adapt_eta = false);

// As above but raises EmptyWindow when a_hat+eta >= b_hat-eta.
ShiftEstimate estimate_shift(const DebiasedFit& curve1, const DebiasedFit& curve2,
                             const GHat& g1, const GHat& g2, double eta,
                             WarningLog& warnings);

// Indicator of [a_hat+eta, b_hat-eta] (closed endpoints).
double weight_window(const ShiftEstimate& se, double t);

}  // namespace qshift
