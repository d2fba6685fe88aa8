#pragma once

#include <string>

#include <Eigen/Cholesky>

#include "tad/types.hpp"

namespace tad {

// Jitter escalation for symmetric positive-definite factorizations.
//
// A plain Cholesky factorization is accepted when it succeeds and every
// squared pivot stays above pivot_floor * max(diagonal). Otherwise jitter
// initial * mean(diagonal) is added and multiplied by `growth` until
// maximum * mean(diagonal) has been tried.
struct JitterPolicy {
  double initial = 1e-8;
  double maximum = 1e-4;
  double growth = 10.0;
  double pivot_floor = 1e-12;
};

class SpdFactor {
 public:
  SpdFactor() = default;
  // Throws NumericalError (tagged with `what`) if no jitter level works.
  explicit SpdFactor(const Matrix& m, const std::string& what = "matrix",
                     const JitterPolicy& policy = {});

  Eigen::Index size() const { return llt_.rows(); }
  double jitter() const { return jitter_; }
  double log_det() const { return log_det_; }

  Matrix solve(const Matrix& rhs) const { return llt_.solve(rhs); }
  Vector solve(const Vector& rhs) const { return llt_.solve(rhs); }

  // L^{-1} rhs, so that rhs^T M^{-1} rhs = |L^{-1} rhs|^2.
  Matrix half_solve(const Matrix& rhs) const;
  Matrix inverse() const;
  Matrix lower() const { return llt_.matrixL(); }

 private:
  Eigen::LLT<Matrix> llt_;
  double jitter_ = 0.0;
  double log_det_ = 0.0;
};

}  // namespace tad
