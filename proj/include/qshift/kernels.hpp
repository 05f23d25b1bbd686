#pragma once

#include "qshift/common.hpp"

namespace qshift {

// Symmetric kernels supported on [-1,1] with unit mass.
enum class KernelId { epanechnikov, biweight };

const char* kernel_name(KernelId k);
KernelId kernel_from_name(const std::string& name);

// K(x); 0 outside [-1,1].
double kernel_eval(KernelId k, double x);

// dK/dx; 0 outside [-1,1].
double kernel_deriv(KernelId k, double x);

// Jackknife-induced second-order kernel  Kbar(x) = 2*sqrt(2)*K(sqrt(2) x) - K(x).
double kbar_eval(KernelId k, double x);

// dKbar/dx (piecewise; 0 outside [-1,1]).
double kbar_prime(KernelId k, double x);

enum class KernelFunctional {
  mass,                // ∫ K
  first_moment,        // ∫ x K
  second_moment,       // ∫ x^2 K
  kbar_mass,           // ∫ Kbar
  kbar_first_moment,   // ∫ x Kbar
  kbar_second_moment,  // ∫ x^2 Kbar
  kbar_prime_sq,       // ∫ Kbar'^2
  hprime_x,            // ∫ K'(x) x dx   (used with the H kernel)
  k_sq,                // ∫ K^2
  kbar_sq,             // ∫ Kbar^2
};

// Composite Simpson quadrature on [-1,1], 2001 nodes.
double kernel_moment(KernelId k, KernelFunctional f);

// Kernel functionals entering the K1 plug-in and the bandwidth correction;
// computed once via quadrature and reused.
struct KernelConstants {
  double int_kbar_prime_sq;  // ∫ Kbar'^2 for the K kernel
  double int_hprime_x;       // ∫ H'(x) x dx for the H kernel
  double int_kbar_sq;        // ∫ Kbar^2 for the K kernel
  double int_k_sq;           // ∫ K^2 for the K kernel

  static KernelConstants compute(KernelId K, KernelId H);
};

}  // namespace qshift
