#include <doctest.h>

#include "qshift/kernels.hpp"

using namespace qshift;

namespace {

// Independent quadrature at doubled resolution for the refinement check
// (kink-aligned panels, like the implementation, but twice the nodes).
double simpson_4001(KernelId k, KernelFunctional f) {
  const auto g = [&](double x) {
    switch (f) {
      case KernelFunctional::kbar_mass: return kbar_eval(k, x);
      case KernelFunctional::kbar_second_moment: return x * x * kbar_eval(k, x);
      case KernelFunctional::kbar_prime_sq: {
        const double d = kbar_prime(k, x);
        return d * d;
      }
      default: return kernel_eval(k, x);
    }
  };
  const double c = 1.0 / std::sqrt(2.0);
  const double breaks[] = {-1.0, -c, c, 1.0};
  double total = 0.0;
  for (int panel = 0; panel < 3; ++panel) {
    const int n = 1334;
    const double lo = breaks[panel], hi = breaks[panel + 1];
    const double h = (hi - lo) / n;
    const double nudge = 1e-9 * (hi - lo);
    double s = g(lo + nudge) + g(hi - nudge);
    for (int i = 1; i < n; ++i) s += g(lo + h * i) * ((i % 2) ? 4.0 : 2.0);
    total += s * h / 3.0;
  }
  return total;
}

}  // namespace

TEST_CASE("kernel evaluations") {
  CHECK(kernel_eval(KernelId::epanechnikov, 0.0) == doctest::Approx(0.75));
  CHECK(kernel_eval(KernelId::epanechnikov, 1.2) == 0.0);
  CHECK(kernel_eval(KernelId::epanechnikov, 0.5) == doctest::Approx(0.5625));
  CHECK(kernel_eval(KernelId::biweight, 0.0) == doctest::Approx(0.9375));
}

TEST_CASE("kbar evaluations") {
  const double s2 = std::sqrt(2.0);
  CHECK(kbar_eval(KernelId::epanechnikov, 0.0) ==
        doctest::Approx(0.75 * (2.0 * s2 - 1.0)));
  // sqrt(2)*0.8 > 1 kills the first term
  CHECK(kbar_eval(KernelId::epanechnikov, 0.8) == doctest::Approx(-0.27));
  for (double x = -1.5; x <= 1.5; x += 0.05)
    CHECK(kbar_eval(KernelId::epanechnikov, -x) ==
          doctest::Approx(kbar_eval(KernelId::epanechnikov, x)));
}

TEST_CASE("kbar derivative") {
  CHECK(kbar_prime(KernelId::epanechnikov, 0.0) == 0.0);
  CHECK(kbar_prime(KernelId::epanechnikov, 2.0) == 0.0);
  // chain rule: 4 K'(sqrt2 x) - K'(x)
  CHECK(kbar_prime(KernelId::epanechnikov, 0.5) ==
        doctest::Approx(4.0 * (-1.5 * std::sqrt(2.0) * 0.5) + 1.5 * 0.5));

  for (KernelId k : {KernelId::epanechnikov, KernelId::biweight}) {
    const double eps = 1e-5;
    for (int i = 1; i < 100; ++i) {
      const double x = -0.98 + 1.96 * i / 100.0;
      const double fd = (kbar_eval(k, x + eps) - kbar_eval(k, x - eps)) / (2 * eps);
      CHECK(std::abs(kbar_prime(k, x) - fd) < 1e-5);
    }
  }
}

TEST_CASE("kernel moments") {
  for (KernelId k : {KernelId::epanechnikov, KernelId::biweight}) {
    CHECK(std::abs(kernel_moment(k, KernelFunctional::mass) - 1.0) < 1e-6);
    CHECK(std::abs(kernel_moment(k, KernelFunctional::first_moment)) < 1e-6);
    CHECK(std::abs(kernel_moment(k, KernelFunctional::kbar_mass) - 1.0) < 1e-6);
    CHECK(std::abs(kernel_moment(k, KernelFunctional::kbar_first_moment)) < 1e-6);
    // second-order kernel: the x^2 moment cancels exactly
    CHECK(std::abs(kernel_moment(k, KernelFunctional::kbar_second_moment)) < 1e-6);
    // integration by parts: int H'(x) x dx = -int H = -1 for unit-mass kernels
    CHECK(kernel_moment(k, KernelFunctional::hprime_x) == doctest::Approx(-1.0));
  }
  CHECK(kernel_moment(KernelId::epanechnikov, KernelFunctional::second_moment) ==
        doctest::Approx(0.2));
  CHECK(kernel_moment(KernelId::epanechnikov, KernelFunctional::k_sq) ==
        doctest::Approx(0.6));
  // closed forms for the Epanechnikov second-order kernel
  CHECK(kernel_moment(KernelId::epanechnikov, KernelFunctional::kbar_prime_sq) ==
        doctest::Approx(12.47124).epsilon(1e-4));
  CHECK(kernel_moment(KernelId::epanechnikov, KernelFunctional::kbar_sq) ==
        doctest::Approx(1.294117).epsilon(1e-4));
}

TEST_CASE("quadrature refinement doubling") {
  for (KernelFunctional f : {KernelFunctional::mass, KernelFunctional::kbar_mass,
                             KernelFunctional::kbar_second_moment,
                             KernelFunctional::kbar_prime_sq}) {
    const double a = kernel_moment(KernelId::epanechnikov, f);
    const double b = simpson_4001(KernelId::epanechnikov, f);
    CHECK(std::abs(a - b) <= 1e-6 * (1.0 + std::abs(b)));
  }
}

TEST_CASE("kernel constants bundle") {
  const KernelConstants kc =
      KernelConstants::compute(KernelId::epanechnikov, KernelId::epanechnikov);
  CHECK(kc.int_kbar_prime_sq > 0.0);
  CHECK(kc.int_k_sq > 0.0);
  CHECK(kc.int_hprime_x == doctest::Approx(-1.0));
  CHECK(kc.int_kbar_sq == doctest::Approx(1.294117).epsilon(1e-4));
}
