#pragma once

// Exact oracle for the weighted check-loss problem: the minimum of a
// piecewise-linear convex objective is attained at a vertex interpolating
// 2p observations, so full enumeration of interpolation subsets gives the
// global optimum. Independent of the library's IRLS/polish path.

#include <Eigen/Dense>

#include <limits>
#include <vector>

namespace oracle {

struct Instance {
  Eigen::MatrixXd Z;   // m x q regressors
  Eigen::VectorXd y;   // m
  std::vector<double> w;
  double tau = 0.5;
};

inline double objective(const Instance& in, const Eigen::VectorXd& beta) {
  double s = 0.0;
  for (int i = 0; i < in.Z.rows(); ++i) {
    const double r = in.y(i) - in.Z.row(i).dot(beta);
    s += in.w[static_cast<std::size_t>(i)] *
         (r >= 0.0 ? in.tau * r : (in.tau - 1.0) * r);
  }
  return s;
}

// Minimizes by enumerating all q-subsets of rows.
inline double best_vertex_objective(const Instance& in, Eigen::VectorXd* argmin = nullptr) {
  const int m = static_cast<int>(in.Z.rows());
  const int q = static_cast<int>(in.Z.cols());
  std::vector<int> comb(static_cast<std::size_t>(q));
  for (int i = 0; i < q; ++i) comb[static_cast<std::size_t>(i)] = i;
  double best = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd Zs(q, q);
  Eigen::VectorXd ys(q);
  while (true) {
    for (int r = 0; r < q; ++r) {
      Zs.row(r) = in.Z.row(comb[static_cast<std::size_t>(r)]);
      ys(r) = in.y(comb[static_cast<std::size_t>(r)]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Zs);
    if (lu.isInvertible()) {
      const Eigen::VectorXd cand = lu.solve(ys);
      if (cand.allFinite()) {
        const double obj = objective(in, cand);
        if (obj < best) {
          best = obj;
          if (argmin) *argmin = cand;
        }
      }
    }
    int j = q - 1;
    while (j >= 0 && comb[static_cast<std::size_t>(j)] == m - q + j) --j;
    if (j < 0) break;
    ++comb[static_cast<std::size_t>(j)];
    for (int l = j + 1; l < q; ++l)
      comb[static_cast<std::size_t>(l)] = comb[static_cast<std::size_t>(l - 1)] + 1;
  }
  return best;
}

}  // namespace oracle
