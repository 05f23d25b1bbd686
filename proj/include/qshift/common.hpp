#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace qshift {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorKind {
  InsufficientSupport,
  RankDeficient,
  NoConvergence,
  GridMismatch,
  EmptyWindow,
  IndexOutOfWindow,
  SingularSigma,
  FlatCurve,
  TooFewCandidates,
  AllCandidatesInfeasible,
  DomainError,
  ParseError,
  NonPositiveForLog,
  InvalidArgument,
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::InsufficientSupport: return "InsufficientSupport";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::EmptyWindow: return "EmptyWindow";
    case ErrorKind::IndexOutOfWindow: return "IndexOutOfWindow";
    case ErrorKind::SingularSigma: return "SingularSigma";
    case ErrorKind::FlatCurve: return "FlatCurve";
    case ErrorKind::TooFewCandidates: return "TooFewCandidates";
    case ErrorKind::AllCandidatesInfeasible: return "AllCandidatesInfeasible";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::NonPositiveForLog: return "NonPositiveForLog";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what),
        kind_(kind) {}
  ErrorKind kind() const { return kind_; }

  // I/O and argument validation map to CLI exit 1, statistical degeneracy to 2.
  bool is_io_error() const {
    return kind_ == ErrorKind::ParseError || kind_ == ErrorKind::NonPositiveForLog ||
           kind_ == ErrorKind::InvalidArgument;
  }

 private:
  ErrorKind kind_;
};

// ---------------------------------------------------------------------------
// Warnings: non-fatal degradations recorded along the pipeline and attached
// to reports (monotonicity loss, range clamps, PSD clipping, ...).
// ---------------------------------------------------------------------------

struct WarningLog {
  std::vector<std::string> messages;
  int clip_count = 0;        // negative-eigenvalue clips in LRV quadratic forms
  int range_clamp_count = 0; // curve-inversion / interpolation range clamps

  void add(const std::string& msg) { messages.push_back(msg); }
  void merge(const WarningLog& other) {
    messages.insert(messages.end(), other.messages.begin(), other.messages.end());
    clip_count += other.clip_count;
    range_clamp_count += other.range_clamp_count;
  }
  bool contains(const std::string& needle) const {
    for (const auto& m : messages)
      if (m.find(needle) != std::string::npos) return true;
    return false;
  }
};

// ---------------------------------------------------------------------------
// RNG: mt19937_64 with hand-rolled variate transforms so that streams are
// bit-reproducible across standard library implementations.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent child seed for substream `stream` of `seed`.
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() {  // in (0,1)
    const std::uint64_t bits = gen_() >> 11;  // 53 bits
    return (static_cast<double>(bits) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double chi_squared(int df) {
    double s = 0.0;
    for (int i = 0; i < df; ++i) {
      const double z = normal();
      s += z * z;
    }
    return s;
  }

  // Student t with `df` degrees of freedom.
  double student_t(int df) {
    const double z = normal();
    const double v = chi_squared(df);
    return z / std::sqrt(v / static_cast<double>(df));
  }

 private:
  std::mt19937_64 gen_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Small numeric helpers
// ---------------------------------------------------------------------------

// Standard normal density.
inline double normal_pdf(double x) {
  return 0.3989422804014326779399460599344 * std::exp(-0.5 * x * x);
}

// Inverse standard normal CDF (Acklam's rational approximation, refined by
// one Halley step; absolute error far below 1e-9 on (0,1)).
double normal_quantile(double p);

// Type-7 empirical quantile of a sample (interpolated order statistic).
double empirical_quantile(std::vector<double> xs, double p);

// Uniform grid of m+1 nodes on [lo, hi].
inline std::vector<double> uniform_grid(double lo, double hi, int m) {
  std::vector<double> g(static_cast<std::size_t>(m) + 1);
  for (int j = 0; j <= m; ++j)
    g[static_cast<std::size_t>(j)] = lo + (hi - lo) * static_cast<double>(j) / m;
  return g;
}

// Trapezoid rule over a uniform grid of values.
inline double trapezoid(const std::vector<double>& y, double dx) {
  if (y.size() < 2) return 0.0;
  double s = 0.5 * (y.front() + y.back());
  for (std::size_t i = 1; i + 1 < y.size(); ++i) s += y[i];
  return s * dx;
}

// Piecewise-linear interpolation of (grid, values) at x; constant beyond ends.
double interp_linear(const std::vector<double>& grid, const std::vector<double>& values,
                     double x);

inline bool all_finite(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace qshift
