#pragma once

#include <map>

#include "qshift/bandwidth.hpp"
#include "qshift/inverse_shift.hpp"

namespace qshift {

enum class Dependence { independent, dependent };

// Bootstrap weight table for one series: W(t_k, j) of the Gaussian process
// Z(t) = sum_j W(j,t) V_j on an evaluation grid over the test window.
struct WeightTable {
  std::vector<double> grid;       // value-axis evaluation nodes
  Eigen::MatrixXd W;              // grid x n, row-major access per node
  double b = 0.0, h = 0.0;
  int N = 0;
  std::vector<double> m_riemann;  // m(i/N), i=1..N
  std::vector<double> mc_riemann; // M_c(i/N), i=1..N
};

WeightTable z_weights(const DebiasedFit& curve, const McEstimate& mc, double b, double h,
                      int N, KernelId K, KernelId H, const std::vector<double>& grid);

// Four tables of the dependent-series construction: Z1 = Z11 - Z21 and
// Z2 = Z12 - Z22, the second series reusing draws at indices floor(n1 j/n2).
struct DependentWeights {
  std::vector<double> grid;
  Eigen::MatrixXd W11, W12;  // grid x n1
  Eigen::MatrixXd W21, W22;  // grid x n2
  std::vector<int> jmap;     // 1-based: j -> floor(n1 j / n2)
};

DependentWeights dependent_z_weights(const DebiasedFit& curve1, const DebiasedFit& curve2,
                                     const JointMcEstimate& mc, double b1, double b2,
                                     double h1, double h2, int N1, int N2, KernelId K,
                                     KernelId H, const std::vector<double>& grid);

// Trapezoid integral of (ghat1 - ghat2)^2 over [a+eta, b-eta], 2000 nodes.
double sit_statistic(const GHat& g1, const GHat& g2, const ShiftEstimate& se);

struct SitResult {
  double T = 0.0;
  std::vector<double> boot;          // replicate order
  double p_value = 1.0;
  std::map<double, bool> reject_at;
  double d_hat = 0.0;
  double window_lo = 0.0, window_hi = 0.0;
};

struct ScbResult {
  std::vector<double> grid;
  std::vector<double> center;    // ghat1 - ghat2
  std::vector<double> k1;        // K1-hat plug-in per node
  double multiplier = 0.0;       // order statistic at the primary alpha
  std::vector<double> band_lo, band_hi;
  bool zero_inside = true;
  std::vector<double> boot;      // replicate order
  std::map<double, bool> reject_at;  // rejects iff zero exits the alpha-band
  double alpha = 0.05;
  double d_hat = 0.0;
  double window_lo = 0.0, window_hi = 0.0;
};

// Inputs shared by both bootstrap algorithms (independent case).
struct BootstrapInputs {
  const WeightTable* w1 = nullptr;
  const WeightTable* w2 = nullptr;
  const DependentWeights* dep = nullptr;  // set for the joint path
};

SitResult bootstrap_sit(const BootstrapInputs& in, const ShiftEstimate& se, double T,
                        int Q, const std::vector<double>& alphas, std::uint64_t seed);

// p = 1 - Q*/Q with Q* = #{replicates <= T}.
double p_value_from_replicates(std::vector<double> replicates, double T);

// Per-series plug-in context for K1-hat.
struct K1Context {
  const DebiasedFit* curve = nullptr;
  const GHat* ghat = nullptr;
  std::function<double(double)> mc_at;  // time -> M_c estimate
  double b = 0.0, h = 0.0;
  int n = 0;
};

double k1_hat(double t, const K1Context& s1, const K1Context& s2,
              const KernelConstants& kc, WarningLog& warnings);

ScbResult bootstrap_scb(const BootstrapInputs& in, const ShiftEstimate& se,
                        const std::vector<double>& center, const std::vector<double>& k1,
                        const std::vector<double>& grid, int Q,
                        const std::vector<double>& alphas, double primary_alpha,
                        std::uint64_t seed);

// ---------------------------------------------------------------------------
// Full pipeline
// ---------------------------------------------------------------------------

struct RunOverrides {
  std::optional<double> b1, b2;     // bandwidth overrides (skip GCV + correction)
  std::optional<double> h1, h2;
  std::optional<double> w1, w2;     // density bandwidths (skip min-volatility)
  std::optional<int> M1, M2;
  std::optional<double> eta;
  std::optional<int> grid_G;        // fit grid intervals; default n_s
  int Q = 500;
  std::vector<double> alphas = {0.05};
  double primary_alpha = 0.05;
  KernelId kernel_K = KernelId::epanechnikov;
  KernelId kernel_H = KernelId::epanechnikov;
  double solver_tol = 1e-8;
  int solver_max_iter = 200;
};

struct TestReport {
  TestMode mode = TestMode::SIT;
  Dependence dependence = Dependence::independent;
  double tau = 0.5;
  std::uint64_t seed = 0;
  int n1 = 0, n2 = 0;
  int Q = 0;
  ShiftEstimate shift;
  TuningSelection tuning1, tuning2;
  std::optional<SitResult> sit;
  std::optional<ScbResult> scb;
  WarningLog warnings;

  bool rejected(double alpha) const;
  double p_value() const { return sit ? sit->p_value : -1.0; }
};

TestReport run_test(const RegressionSample& s1, const RegressionSample& s2,
                    const Eigen::VectorXd& c1, const Eigen::VectorXd& c2, double tau,
                    TestMode mode, Dependence dep, const RunOverrides& cfg,
                    std::uint64_t seed);

// Pipeline through the shift estimate only (tuning + fits + ghat + shift);
// also returns the fitted curves when out parameters are supplied.
ShiftEstimate run_shift_only(const RegressionSample& s1, const RegressionSample& s2,
                             const Eigen::VectorXd& c1, const Eigen::VectorXd& c2,
                             double tau, TestMode mode, const RunOverrides& cfg,
                             WarningLog& warnings, DebiasedFit* curve1_out = nullptr,
                             DebiasedFit* curve2_out = nullptr, GHat* g1_out = nullptr,
                             GHat* g2_out = nullptr);

// Deterministic integral of Var(Z1 - Z2) over the window grid (the bootstrap
// law's mean), used to cross-check replicate draws.
double bootstrap_mean_identity(const BootstrapInputs& in);

}  // namespace qshift
