#include <CLI11.hpp>

#include <iostream>

#include "qshift/csv_io.hpp"
#include "qshift/report.hpp"
#include "qshift/simulate.hpp"

namespace {

using namespace qshift;

struct CommonArgs {
  std::vector<double> taus{0.5};
  std::vector<double> alphas{0.05};
  std::string c1_str, c2_str;
  bool dependent = false;
  std::uint64_t seed = 1;
  int boot_q = 500;
  double b1 = 0, b2 = 0, h1 = 0, h2 = 0, w = 0, eta = 0;
  int M = 0, grid = 0;
  bool log_transform = false;
  std::string out = "";
};

Eigen::VectorXd parse_c(const std::string& s, int p) {
  if (s.empty()) return Eigen::VectorXd::Ones(p);
  std::vector<double> vals;
  std::string cur;
  for (const char ch : s + ",") {
    if (ch == ',') {
      if (!cur.empty()) vals.push_back(std::stod(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (static_cast<int>(vals.size()) != p)
    throw Error(ErrorKind::InvalidArgument,
                "c vector has " + std::to_string(vals.size()) + " entries, need " +
                    std::to_string(p));
  Eigen::VectorXd c(p);
  for (int i = 0; i < p; ++i) c(i) = vals[static_cast<std::size_t>(i)];
  return c;
}

RunOverrides make_overrides(const CommonArgs& a) {
  RunOverrides cfg;
  if (a.b1 > 0) cfg.b1 = a.b1;
  if (a.b2 > 0) cfg.b2 = a.b2;
  if (a.h1 > 0) cfg.h1 = a.h1;
  if (a.h2 > 0) cfg.h2 = a.h2;
  if (a.w > 0) {
    cfg.w1 = a.w;
    cfg.w2 = a.w;
  }
  if (a.M > 0) {
    cfg.M1 = a.M;
    cfg.M2 = a.M;
  }
  if (a.eta > 0) cfg.eta = a.eta;
  if (a.grid > 0) cfg.grid_G = a.grid;
  cfg.Q = a.boot_q;
  cfg.alphas = a.alphas;
  cfg.primary_alpha = a.alphas.empty() ? 0.05 : a.alphas.front();
  for (const double al : a.alphas)
    if (!(al >= 0.0 && al <= 1.0))
      throw Error(ErrorKind::InvalidArgument, "alpha must lie in [0,1]");
  return cfg;
}

void validate_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0))
    throw Error(ErrorKind::InvalidArgument, "tau must lie in (0,1)");
}

std::string out_path(const std::string& base, const std::string& suffix) {
  return base.empty() ? suffix : base + (base.back() == '/' ? suffix : "." + suffix);
}

int cmd_fit(const std::string& in_path, const CommonArgs& args) {
  const RegressionSample sample = ingest_csv(in_path, args.log_transform);
  const Eigen::VectorXd c = parse_c(args.c1_str, sample.p());
  const RunOverrides cfg = make_overrides(args);
  for (const double tau : args.taus) {
    validate_tau(tau);
    WarningLog warn;
    // One-series pipeline: tuning + debiased fit, emitted as curves.
    const RunOverrides single = cfg;
    DebiasedFit curve;
    GHat g;
    // Reuse the two-series path against itself for tuning machinery.
    ShiftEstimate se = run_shift_only(sample, sample, c, c, tau, TestMode::SIT, single,
                                      warn, &curve, nullptr, &g, nullptr);
    (void)se;
    std::vector<std::string> header{"t"};
    for (int j = 1; j <= sample.p(); ++j) header.push_back("theta" + std::to_string(j));
    header.insert(header.end(), {"m_hat", "m_hat_prime"});
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < curve.grid.size(); ++k) {
      std::vector<double> r{curve.grid[k]};
      for (int j = 0; j < sample.p(); ++j)
        r.push_back(curve.theta_tilde(static_cast<Eigen::Index>(k), j));
      r.push_back(curve.m_hat[k]);
      r.push_back(curve.m_hat_prime[k]);
      rows.push_back(std::move(r));
    }
    char tag[32];
    std::snprintf(tag, sizeof(tag), "fit_tau%g.csv", tau);
    write_csv(out_path(args.out, tag), header, rows);
    for (const auto& m : warn.messages) std::cerr << "warning: " << m << "\n";
  }
  return 0;
}

int cmd_shift(const std::string& in1, const std::string& in2, const CommonArgs& args) {
  const RegressionSample s1 = ingest_csv(in1, args.log_transform);
  const RegressionSample s2 = ingest_csv(in2, args.log_transform);
  const Eigen::VectorXd c1 = parse_c(args.c1_str, s1.p());
  const Eigen::VectorXd c2 = parse_c(args.c2_str, s2.p());
  const RunOverrides cfg = make_overrides(args);
  for (const double tau : args.taus) {
    validate_tau(tau);
    WarningLog warn;
    DebiasedFit curve1, curve2;
    GHat g1, g2;
    const ShiftEstimate se = run_shift_only(s1, s2, c1, c2, tau, TestMode::SIT, cfg, warn,
                                            &curve1, &curve2, &g1, &g2);
    std::cout << "tau=" << tau << " d_tilde=" << se.d_tilde << " d_hat=" << se.d_hat
              << " a_hat=" << se.a_hat << " b_hat=" << se.b_hat
              << " window=[" << se.window_lo << "," << se.window_hi << "]"
              << (se.window_valid ? "" : " (empty)") << "\n";

    const double lo = std::min(g1.support_lo(), g2.support_lo());
    const double hi = std::max(g1.support_hi(), g2.support_hi());
    const std::vector<double> vg = uniform_grid(lo, hi, 500);
    std::vector<std::vector<double>> rows;
    for (const double u : vg)
      rows.push_back({u, g1.eval(u), g2.eval(u), g1.G_of(u), g2.G_of(u)});
    char tag[32];
    std::snprintf(tag, sizeof(tag), "ghat_tau%g.csv", tau);
    write_csv(out_path(args.out, tag), {"u", "g1", "g2", "G1", "G2"}, rows);
    for (const auto& m : warn.messages) std::cerr << "warning: " << m << "\n";
  }
  return 0;
}

int cmd_test(TestMode mode, const std::string& in1, const std::string& in2,
             const CommonArgs& args) {
  const RegressionSample s1 = ingest_csv(in1, args.log_transform);
  const RegressionSample s2 = ingest_csv(in2, args.log_transform);
  const Eigen::VectorXd c1 = parse_c(args.c1_str, s1.p());
  const Eigen::VectorXd c2 = parse_c(args.c2_str, s2.p());
  const RunOverrides cfg = make_overrides(args);
  const Dependence dep = args.dependent ? Dependence::dependent : Dependence::independent;

  for (std::size_t ti = 0; ti < args.taus.size(); ++ti) {
    const double tau = args.taus[ti];
    validate_tau(tau);
    const TestReport rep = run_test(s1, s2, c1, c2, tau, mode, dep, cfg,
                                    substream_seed(args.seed, ti));
    char tag[48];
    std::snprintf(tag, sizeof(tag), "%s_tau%g.report.json",
                  mode == TestMode::SIT ? "sit" : "scb", tau);
    write_report(out_path(args.out, tag), rep);
    if (rep.sit)
      std::cout << "tau=" << tau << " T=" << rep.sit->T << " p=" << rep.sit->p_value
                << " d_hat=" << rep.shift.d_hat << "\n";
    if (rep.scb) {
      std::snprintf(tag, sizeof(tag), "scb_tau%g.band.csv", tau);
      write_band_csv(out_path(args.out, tag), *rep.scb);
      std::cout << "tau=" << tau << " zero_inside=" << (rep.scb->zero_inside ? "yes" : "no")
                << " multiplier=" << rep.scb->multiplier << " d_hat=" << rep.shift.d_hat
                << "\n";
    }
  }
  return 0;
}

int cmd_simulate(const std::string& example, int n, const CommonArgs& args) {
  DgpSpec spec;
  spec.example = example_from_name(example);
  spec.n = n;
  spec.tau = args.taus.front();
  spec.dependent_errors = args.dependent;
  spec.seed = args.seed;
  const GeneratedPair pair = make_example(spec);
  export_sample(out_path(args.out, "series1.csv"), pair.s1);
  export_sample(out_path(args.out, "series2.csv"), pair.s2);
  std::cout << "wrote " << out_path(args.out, "series1.csv") << " and "
            << out_path(args.out, "series2.csv") << "\n";
  return 0;
}

int cmd_mc_table(const std::string& example, const std::vector<int>& ns, int reps,
                 const std::string& mode_str, const CommonArgs& args) {
  std::vector<std::vector<double>> rows;
  const TestMode mode = mode_str == "scb" ? TestMode::SCB : TestMode::SIT;
  for (const int n : ns) {
    for (const double tau : args.taus) {
      validate_tau(tau);
      McExperiment exp;
      exp.spec.example = example_from_name(example);
      exp.spec.n = n;
      exp.spec.tau = tau;
      exp.spec.dependent_errors = args.dependent;
      exp.spec.seed = args.seed;
      exp.reps = reps;
      exp.Q = args.boot_q;
      exp.alphas = args.alphas;
      exp.mode = mode;
      exp.dependence = args.dependent ? Dependence::dependent : Dependence::independent;
      exp.overrides = make_overrides(args);
      const McResult res = monte_carlo(exp);
      for (const double a : args.alphas) {
        rows.push_back({static_cast<double>(n), tau, a,
                        mode == TestMode::SIT ? 0.0 : 1.0, args.dependent ? 1.0 : 0.0,
                        res.rejection_rate.count(a) ? res.rejection_rate.at(a) : -1.0,
                        res.stderr_rate.count(a) ? res.stderr_rate.at(a) : -1.0,
                        res.mean_d_hat, static_cast<double>(res.valid),
                        static_cast<double>(res.failures)});
        std::cout << example << " n=" << n << " tau=" << tau << " alpha=" << a
                  << " rate=" << rows.back()[5] << " (valid " << res.valid << ", failures "
                  << res.failures << ")\n";
      }
    }
  }
  write_csv(out_path(args.out, "mc_table.csv"),
            {"n", "tau", "alpha", "mode_scb", "dependent", "rate", "stderr", "mean_d_hat",
             "valid", "failures"},
            rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shift-invariance tests for time-varying quantile regression curves"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string in1, in2, example = "ex1", mode_str = "sit";
  std::vector<int> ns{100};
  int n = 100, reps = 200;

  const auto add_common = [&](CLI::App* cmd, bool needs_two_inputs) {
    if (needs_two_inputs) {
      cmd->add_option("input1", in1, "first series CSV")->required();
      cmd->add_option("input2", in2, "second series CSV")->required();
    }
    cmd->add_option("--tau", args.taus, "quantile levels");
    cmd->add_option("--alpha", args.alphas, "significance levels");
    cmd->add_option("--c1", args.c1_str, "comma-separated c vector, series 1");
    cmd->add_option("--c2", args.c2_str, "comma-separated c vector, series 2");
    cmd->add_flag("--dependent", args.dependent, "use the dependent-series bootstrap");
    cmd->add_option("--seed", args.seed, "RNG seed");
    cmd->add_option("--boot", args.boot_q, "bootstrap replicates Q");
    cmd->add_option("--b1", args.b1, "bandwidth override, series 1");
    cmd->add_option("--b2", args.b2, "bandwidth override, series 2");
    cmd->add_option("--h1", args.h1, "ghat bandwidth override, series 1");
    cmd->add_option("--h2", args.h2, "ghat bandwidth override, series 2");
    cmd->add_option("--w", args.w, "density bandwidth override");
    cmd->add_option("--M", args.M, "gradient window override");
    cmd->add_option("--eta", args.eta, "window trim override");
    cmd->add_option("--grid", args.grid, "fit grid intervals");
    cmd->add_flag("--log-transform", args.log_transform, "apply log to y");
    cmd->add_option("--out", args.out, "output path prefix");
  };

  CLI::App* fit = app.add_subcommand("fit", "fit debiased coefficient curves");
  fit->add_option("input1", in1, "series CSV")->required();
  add_common(fit, false);

  CLI::App* shift = app.add_subcommand("shift", "estimate the horizontal shift");
  add_common(shift, true);

  CLI::App* sit = app.add_subcommand("sit", "integrated-squared-norm bootstrap test");
  add_common(sit, true);

  CLI::App* scb = app.add_subcommand("scb", "simultaneous confidence band test");
  add_common(scb, true);

  CLI::App* sim = app.add_subcommand("simulate", "generate a simulated example pair");
  sim->add_option("--example", example, "ex1|ex2|ex3|ex4|nm1|nm2");
  sim->add_option("--n", n, "sample size");
  add_common(sim, false);

  CLI::App* mc = app.add_subcommand("mc-table", "Monte Carlo size/power table");
  mc->add_option("--example", example, "ex1|ex2|ex3|ex4|nm1|nm2");
  mc->add_option("--n", ns, "sample sizes");
  mc->add_option("--reps", reps, "Monte Carlo repetitions");
  mc->add_option("--mode", mode_str, "sit|scb");
  add_common(mc, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) return cmd_fit(in1, args);
    if (shift->parsed()) return cmd_shift(in1, in2, args);
    if (sit->parsed()) return cmd_test(qshift::TestMode::SIT, in1, in2, args);
    if (scb->parsed()) return cmd_test(qshift::TestMode::SCB, in1, in2, args);
    if (sim->parsed()) return cmd_simulate(example, n, args);
    if (mc->parsed()) return cmd_mc_table(example, ns, reps, mode_str, args);
  } catch (const qshift::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_io_error() ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
