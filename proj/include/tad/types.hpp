#pragma once

#include <Eigen/Dense>

namespace tad {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// A single control setting in R^D.
using Point = Eigen::VectorXd;

// A set of control settings, one per row (N x D).
using PointSet = Eigen::MatrixXd;

// Stacked vectors and covariance matrices over a point set are point-major:
// entry (a, i) lives at a * E + i, matching f(x_1) = (f(x_11)^T, ..., f(x_1N)^T)^T.
inline Eigen::Index stacked_index(Eigen::Index point, Eigen::Index task, Eigen::Index tasks) {
  return point * tasks + task;
}

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace tad
