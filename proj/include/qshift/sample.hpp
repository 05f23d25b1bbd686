#pragma once

#include <Eigen/Dense>

#include "qshift/common.hpp"

namespace qshift {

// One observed series: response y and covariate rows X, row i observed at
// time i/n (1-based i).
struct RegressionSample {
  Eigen::VectorXd y;  // n
  Eigen::MatrixXd X;  // n x p

  int n() const { return static_cast<int>(y.size()); }
  int p() const { return static_cast<int>(X.cols()); }
  double time_of(int i) const { return static_cast<double>(i + 1) / n(); }  // i is 0-based row

  void validate() const {
    if (n() < 10) throw Error(ErrorKind::InvalidArgument, "sample needs n >= 10");
    if (p() < 1) throw Error(ErrorKind::InvalidArgument, "sample needs p >= 1");
    if (X.rows() != y.size())
      throw Error(ErrorKind::InvalidArgument, "X rows must match y length");
    if (!y.allFinite() || !X.allFinite())
      throw Error(ErrorKind::InvalidArgument, "sample contains non-finite entries");
  }
};

}  // namespace qshift
