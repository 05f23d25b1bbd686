#include "qshift/simulate.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

namespace qshift {

namespace {

constexpr int kBurnIn = 200;
constexpr int kOracleKnots = 20;        // 21 knots on [0,1]
constexpr int kOracleDraws = 100000;
constexpr std::uint64_t kOracleSeed = 0x5EEDCAFEULL;

double ar_coef_error(double t) { return 0.6 * (t - 0.3) * (t - 0.3); }
double ar_coef_covariate(double t) { return 0.2 * (t - 0.3) * (t - 0.3); }

double draw_innovation(Rng& rng, int series) {
  if (series == 1) return rng.normal();
  // t_5 standardized to unit variance.
  return rng.student_t(5) / std::sqrt(5.0 / 3.0);
}

const char* kind_tag_name(ErrorKindTag k) {
  switch (k) {
    case ErrorKindTag::series1_normal: return "s1normal";
    case ErrorKindTag::series2_t5: return "s2t5";
    case ErrorKindTag::mix_primary: return "mix1";
    case ErrorKindTag::mix_secondary: return "mix2";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Marginal-quantile oracle for the non-normal error kinds: the stationary
// recursion is simulated at 21 knots and the tau-quantile tabulated; tables
// are cached in memory and on disk.
// ---------------------------------------------------------------------------

struct QuantileTable {
  std::vector<double> knots;
  std::vector<double> values;
};

std::filesystem::path cache_dir() {
  if (const char* env = std::getenv("QSHIFT_CACHE_DIR")) return env;
  return ".qshift_cache";
}

std::string table_key(ErrorKindTag kind, double tau) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "quantile_%s_tau%04d_k%d_d%d_s%llu", kind_tag_name(kind),
                static_cast<int>(std::lround(tau * 1000)), kOracleKnots + 1, kOracleDraws,
                static_cast<unsigned long long>(kOracleSeed));
  return buf;
}

QuantileTable simulate_table(ErrorKindTag kind, double tau) {
  QuantileTable tab;
  tab.knots = uniform_grid(0.0, 1.0, kOracleKnots);
  tab.values.resize(tab.knots.size());
  for (std::size_t k = 0; k < tab.knots.size(); ++k) {
    const double a = ar_coef_error(tab.knots[k]);
    Rng rng(substream_seed(kOracleSeed, static_cast<std::uint64_t>(k) + 1));
    double e1 = 0.0, e2 = 0.0;
    for (int i = 0; i < kBurnIn; ++i) {
      e1 = a * e1 + draw_innovation(rng, 1);
      e2 = a * e2 + draw_innovation(rng, 2);
    }
    std::vector<double> draws(static_cast<std::size_t>(kOracleDraws));
    for (int i = 0; i < kOracleDraws; ++i) {
      e1 = a * e1 + draw_innovation(rng, 1);
      e2 = a * e2 + draw_innovation(rng, 2);
      double v = 0.0;
      switch (kind) {
        case ErrorKindTag::series1_normal: v = e1; break;
        case ErrorKindTag::series2_t5: v = e2; break;
        case ErrorKindTag::mix_primary: v = 0.8 * e1 + 0.2 * e2; break;
        case ErrorKindTag::mix_secondary: v = 0.2 * e1 + 0.8 * e2; break;
      }
      draws[static_cast<std::size_t>(i)] = v;
    }
    tab.values[k] = empirical_quantile(std::move(draws), tau);
  }
  return tab;
}

const QuantileTable& oracle_table(ErrorKindTag kind, double tau) {
  static std::mutex mu;
  static std::map<std::string, QuantileTable> cache;
  std::lock_guard<std::mutex> lock(mu);

  const std::string key = table_key(kind, tau);
  if (const auto it = cache.find(key); it != cache.end()) return it->second;

  const std::filesystem::path file = cache_dir() / (key + ".txt");
  QuantileTable tab;
  if (std::ifstream in{file}; in) {
    double t, v;
    while (in >> t >> v) {
      tab.knots.push_back(t);
      tab.values.push_back(v);
    }
  }
  if (tab.knots.size() != static_cast<std::size_t>(kOracleKnots + 1)) {
    tab = simulate_table(kind, tau);
    std::error_code ec;
    std::filesystem::create_directories(cache_dir(), ec);
    const std::filesystem::path tmp = file.string() + ".tmp";
    if (std::ofstream out{tmp}; out) {
      out.precision(17);
      for (std::size_t k = 0; k < tab.knots.size(); ++k)
        out << tab.knots[k] << ' ' << tab.values[k] << '\n';
      out.close();
      std::filesystem::rename(tmp, file, ec);
    }
  }
  return cache.emplace(key, std::move(tab)).first->second;
}

}  // namespace

const char* example_name(ExampleId id) {
  switch (id) {
    case ExampleId::Ex1: return "ex1";
    case ExampleId::Ex2: return "ex2";
    case ExampleId::Ex3: return "ex3";
    case ExampleId::Ex4: return "ex4";
    case ExampleId::NM1: return "nm1";
    case ExampleId::NM2: return "nm2";
  }
  return "?";
}

ExampleId example_from_name(const std::string& name) {
  if (name == "ex1") return ExampleId::Ex1;
  if (name == "ex2") return ExampleId::Ex2;
  if (name == "ex3") return ExampleId::Ex3;
  if (name == "ex4") return ExampleId::Ex4;
  if (name == "nm1") return ExampleId::NM1;
  if (name == "nm2") return ExampleId::NM2;
  throw Error(ErrorKind::InvalidArgument, "unknown example '" + name + "'");
}

bool is_null_design(ExampleId id) {
  return id == ExampleId::Ex1 || id == ExampleId::Ex2 || id == ExampleId::NM1;
}

std::vector<double> gen_error_series(int n, int series, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "gen_error_series needs n >= 1");
  Rng rng(seed);
  std::vector<double> e(static_cast<std::size_t>(n));
  double state = 0.0;
  const double a0 = ar_coef_error(1.0 / n);
  for (int i = 0; i < kBurnIn; ++i) state = a0 * state + draw_innovation(rng, series);
  for (int i = 1; i <= n; ++i) {
    state = ar_coef_error(static_cast<double>(i) / n) * state + draw_innovation(rng, series);
    e[static_cast<std::size_t>(i - 1)] = state;
  }
  return e;
}

Eigen::MatrixXd gen_covariates(int n, int p, int series, std::uint64_t seed) {
  if (p < 1) throw Error(ErrorKind::InvalidArgument, "gen_covariates needs p >= 1");
  Eigen::MatrixXd X(n, p);
  for (int j = 1; j <= p; ++j) {
    Rng rng(substream_seed(seed, static_cast<std::uint64_t>(series) * 131 + j));
    double state = 0.0;
    const double a0 = ar_coef_covariate(1.0 / n);
    for (int i = 0; i < kBurnIn; ++i) state = a0 * state + rng.chi_squared(j) / j;
    for (int i = 1; i <= n; ++i) {
      state = ar_coef_covariate(static_cast<double>(i) / n) * state + rng.chi_squared(j) / j;
      X(i - 1, j - 1) = state;
    }
  }
  return X;
}

double marginal_quantile(double t, double tau, ErrorKindTag kind) {
  if (kind == ErrorKindTag::series1_normal) {
    // Stationary approximation: e(t) ~ N(0, 1/(1-a(t)^2)).
    const double a = ar_coef_error(t);
    return normal_quantile(tau) / std::sqrt(1.0 - a * a);
  }
  const QuantileTable& tab = oracle_table(kind, tau);
  return interp_linear(tab.knots, tab.values, t);
}

std::vector<double> center_errors(const std::vector<double>& e, double tau,
                                  ErrorKindTag kind, int n) {
  std::vector<double> out(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double t = static_cast<double>(i + 1) / n;
    out[i] = e[i] - marginal_quantile(t, tau, kind);
  }
  return out;
}

namespace {

// theta_j(t) per design; log arguments below `floor` are clamped and counted.
std::vector<double> theta_of(ExampleId id, int series, double t, int n, int* clamped) {
  const auto safe_log = [&](double u) {
    // clamp threshold sits below 1/n so that the row at t = 0.1 + 1/n (whose
    // argument is 1/n only up to rounding) stays unclamped
    if (u < 0.9 / n) {
      if (clamped) ++(*clamped);
      u = 1.0 / n;
    }
    return std::log(u);
  };
  switch (id) {
    case ExampleId::Ex1:
      return series == 1 ? std::vector<double>{t, safe_log(t)}
                         : std::vector<double>{t - 0.1, safe_log(t - 0.1)};
    case ExampleId::Ex2: {
      const double u = series == 1 ? t : t - 0.1;
      return {u * u, std::sin(1.5707963267948966 * u), std::exp(u)};
    }
    case ExampleId::Ex3:
      if (series == 1) return {t, safe_log(t)};
      {
        const double lg = safe_log(t);
        return {t * t, lg * lg};
      }
    case ExampleId::Ex4:
      if (series == 1)
        return {t * t, std::sin(1.5707963267948966 * t), std::exp(t)};
      return {t * t * t, std::cos(1.5707963267948966 * t), safe_log(t)};
    case ExampleId::NM1:
      return series == 1
                 ? std::vector<double>{t * (0.5 - t) * (1.0 - t)}
                 : std::vector<double>{(t - 0.1) * (0.6 - t) * (1.1 - t)};
    case ExampleId::NM2:
      return series == 1
                 ? std::vector<double>{t * (0.5 - t) * (1.0 - t)}
                 : std::vector<double>{t * (0.5 - t) * (0.5 - t) * (1.0 - t)};
  }
  throw Error(ErrorKind::InvalidArgument, "unknown example id");
}

int p_of(ExampleId id) {
  switch (id) {
    case ExampleId::Ex1:
    case ExampleId::Ex3: return 2;
    case ExampleId::Ex2:
    case ExampleId::Ex4: return 3;
    case ExampleId::NM1:
    case ExampleId::NM2: return 1;
  }
  return 0;
}

}  // namespace

double true_m(ExampleId id, int series, double t, int n) {
  const std::vector<double> th = theta_of(id, series, t, n, nullptr);
  double s = 0.0;
  for (const double v : th) s += v;  // c vectors are all ones
  return s;
}

GeneratedPair make_example(const DgpSpec& spec) {
  const int n = spec.n;
  const int p = p_of(spec.example);

  const std::vector<double> raw1 = gen_error_series(n, 1, substream_seed(spec.seed, 1));
  const std::vector<double> raw2 = gen_error_series(n, 2, substream_seed(spec.seed, 2));

  std::vector<double> e1, e2;
  if (spec.dependent_errors) {
    std::vector<double> m1(raw1.size()), m2(raw2.size());
    for (std::size_t i = 0; i < raw1.size(); ++i) {
      m1[i] = 0.8 * raw1[i] + 0.2 * raw2[i];
      m2[i] = 0.2 * raw1[i] + 0.8 * raw2[i];
    }
    e1 = center_errors(m1, spec.tau, ErrorKindTag::mix_primary, n);
    e2 = center_errors(m2, spec.tau, ErrorKindTag::mix_secondary, n);
  } else {
    e1 = center_errors(raw1, spec.tau, ErrorKindTag::series1_normal, n);
    e2 = center_errors(raw2, spec.tau, ErrorKindTag::series2_t5, n);
  }

  GeneratedPair out;
  out.s1.X = gen_covariates(n, p, 1, substream_seed(spec.seed, 3));
  out.s2.X = gen_covariates(n, p, 2, substream_seed(spec.seed, 4));
  out.s1.y.resize(n);
  out.s2.y.resize(n);
  for (int i = 1; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    const std::vector<double> th1 = theta_of(spec.example, 1, t, n, &out.clamped_rows_s1);
    const std::vector<double> th2 = theta_of(spec.example, 2, t, n, &out.clamped_rows_s2);
    double y1 = e1[static_cast<std::size_t>(i - 1)];
    double y2 = e2[static_cast<std::size_t>(i - 1)];
    for (int j = 0; j < p; ++j) {
      y1 += th1[static_cast<std::size_t>(j)] * out.s1.X(i - 1, j);
      y2 += th2[static_cast<std::size_t>(j)] * out.s2.X(i - 1, j);
    }
    out.s1.y(i - 1) = y1;
    out.s2.y(i - 1) = y2;
  }
  out.c1 = Eigen::VectorXd::Ones(p);
  out.c2 = Eigen::VectorXd::Ones(p);
  return out;
}

McResult monte_carlo(const McExperiment& exp) {
  if (exp.reps < 1) throw Error(ErrorKind::InvalidArgument, "monte_carlo needs reps >= 1");

  struct RepOutcome {
    bool valid = false;
    double d_hat = 0.0;
    std::map<double, bool> rejected;
    std::string failure;
  };
  std::vector<RepOutcome> outcomes(static_cast<std::size_t>(exp.reps));

  RunOverrides base = exp.overrides;
  base.Q = exp.Q;
  base.alphas = exp.alphas;
  if (!exp.alphas.empty()) base.primary_alpha = exp.alphas.front();

  // Warm the quantile tables before spawning workers.
  make_example(DgpSpec{exp.spec.example, exp.spec.n, exp.spec.tau, exp.spec.dependent_errors,
                       substream_seed(exp.spec.seed, 999983)});

  std::atomic<int> next{0};
  const auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= exp.reps) return;
      RepOutcome& out = outcomes[static_cast<std::size_t>(r)];
      const std::uint64_t rep_seed = substream_seed(exp.spec.seed, 1000 + r);
      try {
        DgpSpec ds = exp.spec;
        ds.seed = rep_seed;
        const GeneratedPair pair = make_example(ds);
        const std::uint64_t boot_seed = substream_seed(rep_seed, 2);
        if (exp.shift_only) {
          WarningLog warn;
          const ShiftEstimate se = run_shift_only(pair.s1, pair.s2, pair.c1, pair.c2,
                                                  exp.spec.tau, exp.mode, base, warn);
          out.d_hat = se.d_hat;
          out.valid = true;
        } else {
          const TestReport rep = run_test(pair.s1, pair.s2, pair.c1, pair.c2, exp.spec.tau,
                                          exp.mode, exp.dependence, base, boot_seed);
          out.d_hat = rep.shift.d_hat;
          for (const double a : exp.alphas) out.rejected[a] = rep.rejected(a);
          out.valid = true;
        }
      } catch (const Error& e) {
        out.failure = e.what();
      } catch (const std::exception& e) {
        out.failure = std::string("unexpected: ") + e.what();
      }
    }
  };

  int nthreads = exp.threads > 0 ? exp.threads
                                 : static_cast<int>(std::thread::hardware_concurrency());
  nthreads = std::max(1, std::min(nthreads, exp.reps));
  std::vector<std::thread> pool;
  for (int i = 1; i < nthreads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  McResult res;
  res.reps = exp.reps;
  double d_sum = 0.0;
  std::map<double, int> reject_counts;
  for (const double a : exp.alphas) reject_counts[a] = 0;
  for (const RepOutcome& out : outcomes) {
    if (!out.valid) {
      ++res.failures;
      res.failure_messages.push_back(out.failure);
      continue;
    }
    ++res.valid;
    d_sum += out.d_hat;
    for (const auto& [a, rej] : out.rejected)
      if (rej) ++reject_counts[a];
  }
  if (res.valid > 0) {
    res.mean_d_hat = d_sum / res.valid;
    for (const double a : exp.alphas) {
      const double rate = static_cast<double>(reject_counts[a]) / res.valid;
      res.rejection_rate[a] = rate;
      res.stderr_rate[a] = std::sqrt(rate * (1.0 - rate) / res.valid);
    }
  }
  return res;
}

}  // namespace qshift
