#include "qshift/kernels.hpp"

namespace qshift {

namespace {
constexpr double kSqrt2 = 1.4142135623730950488;
constexpr int kSimpsonNodes = 2001;  // even interval count on [-1,1]
}  // namespace

const char* kernel_name(KernelId k) {
  switch (k) {
    case KernelId::epanechnikov: return "epanechnikov";
    case KernelId::biweight: return "biweight";
  }
  return "?";
}

KernelId kernel_from_name(const std::string& name) {
  if (name == "epanechnikov") return KernelId::epanechnikov;
  if (name == "biweight") return KernelId::biweight;
  throw Error(ErrorKind::InvalidArgument, "unknown kernel '" + name + "'");
}

double kernel_eval(KernelId k, double x) {
  if (x < -1.0 || x > 1.0) return 0.0;
  const double u = 1.0 - x * x;
  switch (k) {
    case KernelId::epanechnikov: return 0.75 * u;
    case KernelId::biweight: return 0.9375 * u * u;
  }
  return 0.0;
}

double kernel_deriv(KernelId k, double x) {
  if (x < -1.0 || x > 1.0) return 0.0;
  switch (k) {
    case KernelId::epanechnikov: return -1.5 * x;
    case KernelId::biweight: return -3.75 * x * (1.0 - x * x);
  }
  return 0.0;
}

double kbar_eval(KernelId k, double x) {
  return 2.0 * kSqrt2 * kernel_eval(k, kSqrt2 * x) - kernel_eval(k, x);
}

double kbar_prime(KernelId k, double x) {
  // d/dx [2*sqrt(2) K(sqrt(2) x)] = 4 K'(sqrt(2) x)
  return 4.0 * kernel_deriv(k, kSqrt2 * x) - kernel_deriv(k, x);
}

double kernel_moment(KernelId k, KernelFunctional f) {
  const auto integrand = [&](double x) -> double {
    switch (f) {
      case KernelFunctional::mass: return kernel_eval(k, x);
      case KernelFunctional::first_moment: return x * kernel_eval(k, x);
      case KernelFunctional::second_moment: return x * x * kernel_eval(k, x);
      case KernelFunctional::kbar_mass: return kbar_eval(k, x);
      case KernelFunctional::kbar_first_moment: return x * kbar_eval(k, x);
      case KernelFunctional::kbar_second_moment: return x * x * kbar_eval(k, x);
      case KernelFunctional::kbar_prime_sq: {
        const double d = kbar_prime(k, x);
        return d * d;
      }
      case KernelFunctional::hprime_x: return kernel_deriv(k, x) * x;
      case KernelFunctional::k_sq: {
        const double v = kernel_eval(k, x);
        return v * v;
      }
      case KernelFunctional::kbar_sq: {
        const double v = kbar_eval(k, x);
        return v * v;
      }
    }
    return 0.0;
  };

  // Kbar is piecewise (kinks at +-1/sqrt(2) where the rescaled kernel ends);
  // composite Simpson runs on kink-aligned panels so each integrand piece is
  // a smooth polynomial.
  const double c = 1.0 / kSqrt2;
  const double breaks[] = {-1.0, -c, c, 1.0};
  const int per_panel = (kSimpsonNodes - 1) / 3 + ((kSimpsonNodes - 1) / 3) % 2;  // even
  double total = 0.0;
  for (int panel = 0; panel < 3; ++panel) {
    const double lo = breaks[panel], hi = breaks[panel + 1];
    const double h = (hi - lo) / per_panel;
    // endpoint evaluations nudged inward: the one-sided limit is the panel's
    // own branch at the kink
    const double nudge = 1e-9 * (hi - lo);
    double s = integrand(lo + nudge) + integrand(hi - nudge);
    for (int i = 1; i < per_panel; ++i)
      s += integrand(lo + h * i) * ((i % 2 == 1) ? 4.0 : 2.0);
    total += s * h / 3.0;
  }
  return total;
}

KernelConstants KernelConstants::compute(KernelId K, KernelId H) {
  return KernelConstants{
      kernel_moment(K, KernelFunctional::kbar_prime_sq),
      kernel_moment(H, KernelFunctional::hprime_x),
      kernel_moment(K, KernelFunctional::kbar_sq),
      kernel_moment(K, KernelFunctional::k_sq),
  };
}

}  // namespace qshift
