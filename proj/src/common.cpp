#include "qshift/common.hpp"

namespace qshift {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw Error(ErrorKind::InvalidArgument, "normal_quantile requires p in (0,1)");

  // Acklam coefficients.
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};

  const double plow = 0.02425;
  double x;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // One Halley refinement against the error function.
  const double e = 0.5 * std::erfc(-x / 1.4142135623730951) - p;
  const double u = e * 2.5066282746310002 * std::exp(0.5 * x * x);
  x = x - u / (1.0 + 0.5 * x * u);
  return x;
}

double empirical_quantile(std::vector<double> xs, double p) {
  if (xs.empty()) throw Error(ErrorKind::InvalidArgument, "empirical_quantile of empty sample");
  std::sort(xs.begin(), xs.end());
  const double h = p * (static_cast<double>(xs.size()) - 1.0);
  const auto lo = static_cast<std::size_t>(std::clamp(std::floor(h), 0.0,
                                                      static_cast<double>(xs.size() - 1)));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return xs[lo] + frac * (xs[hi] - xs[lo]);
}

double interp_linear(const std::vector<double>& grid, const std::vector<double>& values,
                     double x) {
  if (grid.size() != values.size() || grid.empty())
    throw Error(ErrorKind::GridMismatch, "interp_linear: grid/value size mismatch");
  if (x <= grid.front()) return values.front();
  if (x >= grid.back()) return values.back();
  const auto it = std::upper_bound(grid.begin(), grid.end(), x);
  const std::size_t j = static_cast<std::size_t>(it - grid.begin());
  const double t0 = grid[j - 1], t1 = grid[j];
  const double w = (t1 > t0) ? (x - t0) / (t1 - t0) : 0.0;
  return values[j - 1] + w * (values[j] - values[j - 1]);
}

}  // namespace qshift
